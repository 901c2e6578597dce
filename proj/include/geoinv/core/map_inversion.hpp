#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geoinv/core/forward.hpp"
#include "geoinv/core/gl.hpp"
#include "geoinv/core/grid.hpp"

namespace geoinv {

enum class MapInit { Zeros, Random, Supplied };

struct MapConfig {
  double lambda_gl = 0.0;
  double lambda_tik = 0.0;
  std::size_t max_iters = 500;
  double grad_tol = 1e-8;
  double shrink = 0.5;
  double sufficient_decrease = 1e-4;
  std::size_t max_backtracks = 60;
  MapInit init = MapInit::Zeros;
  std::uint64_t seed = 0;
  std::vector<double> supplied;  // stacked [rho; chi] for MapInit::Supplied
  std::size_t restarts = 1;      // restart 0 uses `init`, later ones random inits
  double rho_init_scale = 1.0;   // std of random density inits
  bool precondition = true;      // Jacobi scaling from the data, Tikhonov and GL curvature
  GLParams gl{};                 // kappa and eps; lambda_gl above takes precedence

  void validate() const;
};

MapInit map_init_from_string(const std::string& s);
std::string to_string(MapInit init);

// Objective pieces shared by energy and gradient.
struct MapProblem {
  const LinearOperator& op;
  std::span<const double> y;
  std::span<const double> sigma;
  VoxelGrid grid;
  ChiBounds bounds;
};

// E_data + lambda_gl E_GL(phi(chi)) + lambda_tik/2 ||m||^2 on stacked m = [rho; chi].
double total_energy(std::span<const double> m, const MapProblem& prob, const MapConfig& cfg);
std::vector<double> total_gradient(std::span<const double> m, const MapProblem& prob,
                                   const MapConfig& cfg);

struct MapTraceRow {
  std::size_t iter = 0;
  double energy = 0.0;
  double grad_norm = 0.0;  // projected gradient
  double step = 0.0;
  std::size_t backtracks = 0;
};

struct MapRun {
  std::vector<double> m;
  std::vector<MapTraceRow> trace;
  double energy = 0.0;
  bool converged = false;
  bool aborted = false;
  std::string abort_reason;
};

struct MapResult {
  JointModel model;
  std::vector<MapRun> runs;
  std::size_t best = 0;
};

// Diagonal curvature estimate used as the preconditioner: column norms of
// the whitened operator plus lambda_tik, plus an upper bound of the GL
// Hessian diagonal on the chi block.
std::vector<double> map_curvature_diagonal(const MapProblem& prob, const MapConfig& cfg);

// Projected gradient descent (chi >= 0) with Barzilai-Borwein trial steps
// and Armijo backtracking, optionally Jacobi-preconditioned. Trial points
// with +inf energy count as rejected; NaN aborts the run.
MapRun descend(const MapProblem& prob, const MapConfig& cfg, std::vector<double> m0);

std::vector<double> initial_model(const MapProblem& prob, const MapConfig& cfg,
                                  std::size_t restart);

MapResult invert_map(const MapProblem& prob, const MapConfig& cfg);
MapResult invert_map(const FieldData& data, const JointOperator& op, const VoxelGrid& grid,
                     const ChiBounds& bounds, const MapConfig& cfg);

}  // namespace geoinv
