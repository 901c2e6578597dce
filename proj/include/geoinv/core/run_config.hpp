#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "geoinv/core/gl.hpp"
#include "geoinv/core/grid.hpp"
#include "geoinv/core/map_inversion.hpp"
#include "geoinv/core/sampler.hpp"
#include "geoinv/core/scenario.hpp"

namespace geoinv {

// Model-space parameterisation used by the sample subcommand: the latent is
// standardised and decoded elementwise to [rho; chi].
struct SamplerModelConfig {
  double rho_scale = 100.0;            // kg/m^3 per latent unit
  std::optional<double> chi_scale;     // default: half the chi bounds range
  std::optional<double> chi_offset;    // default: bounds midpoint
  double prior_mu = 0.0;               // latent prior mean (every entry)
  double prior_sigma0 = 1.0;           // latent prior std
  std::string velocity_table;          // optional TabulatedVelocity JSON path
  bool guidance = true;                // attach the GL guidance context
};

struct GlDiagConfig {
  std::size_t cells_per_width = 32;
  std::vector<double> eps{0.2, 0.1, 0.05, 0.025, 0.0125};
};

/// Strict JSON run configuration. Every section is optional; unknown keys at
/// any level are rejected with ErrorCode::Config.
///   {"grid":{...}, "bounds":{"chi_min","chi_max"}, "gl":{...},
///    "scenario":{...}, "sampler":{...}, "map":{...}, "gl_diag":{...},
///    "threads":n}
struct RunConfig {
  std::optional<VoxelGrid> grid;
  ChiBounds bounds{};
  GLParams gl{};
  ScenarioSpec scenario{};
  bool has_scenario = false;
  SamplerConfig sampler{};
  SamplerModelConfig sampler_model{};
  MapConfig map{};
  GlDiagConfig gl_diag{};
  std::optional<int> threads;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
};

}  // namespace geoinv
