#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geoinv/core/forward.hpp"
#include "geoinv/core/grid.hpp"

namespace geoinv {

struct Body {
  enum class Shape { Box, Sphere };

  Shape shape = Shape::Box;
  Vec3 lo{};         // box corners
  Vec3 hi{};
  Vec3 center{};     // sphere
  double radius = 0.0;
  double rho = 0.0;  // density contrast, kg/m^3
  double chi = 0.0;  // SI susceptibility

  // Cell centres strictly inside (box: half-open [lo, hi)).
  bool contains(const Vec3& p) const noexcept;
  Box extent() const noexcept;
};

struct ScenarioSpec {
  VoxelGrid grid{8, 8, 8, 1.0};
  std::vector<Body> bodies;
  double host_rho = 0.0;
  ChiBounds bounds{};        // host takes chi_min
  std::size_t survey_nx = 16;
  std::size_t survey_ny = 16;
  double survey_height = 0.0;  // above the top face; 0 selects 2h
  GravityKernelConfig gravity{};
  MagneticKernelConfig magnetic{};
  // Noise: snr > 0 sets each block's sigma to rms(clean block) / snr,
  // otherwise sigma_grav / sigma_mag are used directly.
  double snr = 0.0;
  double sigma_grav = 0.1;
  double sigma_mag = 15.0;
  bool add_noise = true;
  EvalMode mode = EvalMode::Auto;

  void validate() const;
};

struct Scenario {
  ScenarioSpec spec;
  JointModel truth;
  FieldData data;
  std::vector<double> clean;       // noiseless [grav; mag]
  std::vector<std::uint8_t> labels;  // 1 where a body with chi > chi_min owns the cell
  std::uint64_t seed = 0;
};

// Rasterises bodies in order (later ones overwrite) and simulates the field.
JointModel rasterise(const ScenarioSpec& spec, std::vector<std::uint8_t>* labels = nullptr);
Scenario generate_scenario(const ScenarioSpec& spec, std::uint64_t seed);

}  // namespace geoinv
