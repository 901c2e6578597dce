#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "geoinv/core/grid.hpp"
#include "geoinv/core/random.hpp"

namespace geoinv {

/// Ginzburg-Landau coefficients. The grid spacing comes from the VoxelGrid
/// the field lives on.
struct GLParams {
  double kappa = 1.0;      // interface (gradient) coefficient
  double eps = 1.0;        // double-well sharpness
  double lambda0 = 0.0;    // guidance base weight
  double gamma = 2.0;      // guidance schedule exponent
  double lambda_gl = 1.0;  // static regularisation weight

  void validate() const;
};

/// 6-connected graph Laplacian with Neumann boundaries: missing neighbours
/// are dropped and the diagonal holds the actual neighbour count.
class GraphLaplacian {
 public:
  explicit GraphLaplacian(const VoxelGrid& grid) : grid_(grid) {}

  const VoxelGrid& grid() const noexcept { return grid_; }
  std::size_t neighbour_count(std::size_t cell) const noexcept;
  // Neighbours of `cell` in -x, +x, -y, +y, -z, +z order (missing ones skipped).
  std::vector<std::size_t> neighbours(std::size_t cell) const;

  void apply(std::span<const double> x, std::span<double> y) const;
  std::vector<double> apply(std::span<const double> x) const;
  // x^T L x as a sum over edges; never negative.
  double quadratic_form(std::span<const double> x) const;

 private:
  VoxelGrid grid_;
};

double double_well(double s) noexcept;        // (s^2 - 1)^2 / 4
double double_well_prime(double s) noexcept;  // s^3 - s
double double_well_second(double s) noexcept; // 3 s^2 - 1

// Energy per cell volume dV = h^3:
//   E = dV [ kappa/(2h^2) phi^T L phi + 1/(4 eps^2) sum (phi_i^2 - 1)^2 ]
// The per-cell form sums each neighbour pair from both sides.
double gl_energy(const VoxelGrid& grid, std::span<const double> phi, const GLParams& p);
double gl_energy_per_cell(const VoxelGrid& grid, std::span<const double> phi, const GLParams& p);
double gl_energy(const PropertyVolume& phi, const GLParams& p);

// Exact gradient and Hessian action of gl_energy (both carry the dV factor).
std::vector<double> gl_gradient(const VoxelGrid& grid, std::span<const double> phi,
                                const GLParams& p);
std::vector<double> gl_hessian_apply(const VoxelGrid& grid, std::span<const double> phi,
                                     std::span<const double> v, const GLParams& p);

// Largest explicit Euler step with the Gershgorin bound 1/(12 kappa/h^2 + 2/eps^2).
double allen_cahn_stable_dt(const VoxelGrid& grid, const GLParams& p);

struct AllenCahnStep {
  PropertyVolume phi;
  bool exceeds_stable_dt = false;
};

// phi <- phi - dt * gl_gradient / dV. Takes the step even when dt is above the
// stability bound, flagging it.
AllenCahnStep allen_cahn_step(const PropertyVolume& phi, double dt, const GLParams& p);

// Euler-Maruyama: adds sqrt(2 T dt / dV) xi per cell. T == 0 skips the
// noise draw entirely and matches allen_cahn_step bit for bit.
AllenCahnStep stochastic_allen_cahn_step(const PropertyVolume& phi, double dt, double temperature,
                                         NormalSource& noise, const GLParams& p);
AllenCahnStep stochastic_allen_cahn_step(const PropertyVolume& phi, double dt, double temperature,
                                         std::uint64_t seed, const GLParams& p);

// In-place variant for long chains.
void stochastic_allen_cahn_update(const VoxelGrid& grid, std::span<double> phi, double dt,
                                  double temperature, NormalSource& noise, const GLParams& p);

// Gradient of lambda_GL * E_GL(phi(chi)) with respect to chi, negated (the
// prior score on the susceptibility block).
std::vector<double> gl_prior_score_chi(const VoxelGrid& grid, std::span<const double> chi,
                                       const ChiBounds& b, const GLParams& p);
// Full-length (2N) score for a joint model; the density block is zero.
std::vector<double> gl_prior_score(const JointModel& m, const ChiBounds& b, const GLParams& p);

// lambda0 * clamp(1 - t, 0, 1)^gamma; t = 1 is noise, t = 0 is data.
double lambda_schedule(double t, const GLParams& p) noexcept;

struct LossWeightClamp {
  double lo = 0.049787068367863944;  // e^-3
  double hi = 20.085536923187668;    // e^3
};

// Batch-standardised energies (population std), w_i = exp(-lambda E~_i)
// clamped. A zero-variance batch gives all-ones weights.
std::vector<double> gl_loss_weights(std::span<const double> energies, double lambda,
                                    LossWeightClamp clamp = {});

// Weighted mean sum(w l) / sum(w).
double weighted_loss(std::span<const double> losses, std::span<const double> weights);

struct InterfaceEnergy {
  double eps = 0.0;
  double energy = 0.0;
};

// c0 = 2 sqrt(2) / 3 for the standard double well.
inline constexpr double kModicaMortolaC0 = 0.94280904158206336587;

// Scaled 1D energy  int (eps/2)|phi'|^2 + W(phi)/eps  of the heteroclinic
// profile tanh(x / (sqrt(2) eps)) on [-1/2, 1/2], discretised with
// `cells_per_width` cells per interface width sqrt(2) eps. Values approach
// c0 (one flat interface of unit perimeter) as eps -> 0.
std::vector<InterfaceEnergy> interface_energy_diagnostic(std::size_t cells_per_width,
                                                         std::span<const double> eps_list);

// Same discrete functional on an arbitrary sampled profile with spacing dx.
double modica_mortola_energy(std::span<const double> profile, double dx, double eps);

}  // namespace geoinv
