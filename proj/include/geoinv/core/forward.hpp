#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "geoinv/core/grid.hpp"

namespace geoinv {

enum class GravityUnit { SI, MilliGal };

struct GravityKernelConfig {
  double G = 6.674e-11;  // m^3 kg^-1 s^-2
  GravityUnit unit = GravityUnit::MilliGal;

  void validate() const;
  // Factor from m/s^2 to the output unit.
  double unit_scale() const noexcept { return unit == GravityUnit::MilliGal ? 1e5 : 1.0; }
};

// Ambient field for induced magnetisation. Axes: x north, y east, z up, so
// a positive inclination points the field downward.
struct MagneticKernelConfig {
  static constexpr double kMu0 = 4e-7 * 3.14159265358979323846;  // T m / A

  double B0 = 50000.0;  // nT
  double inclination_deg = 90.0;
  double declination_deg = 0.0;

  void validate() const;
  Vec3 direction() const noexcept;
  double h0() const noexcept { return B0 * 1e-9 / kMu0; }  // A/m
};

/// Closed-form vertical attraction of a unit-density rectangular prism,
/// reported as the downward component in the configured unit. `obs` must lie
/// outside the closed prism.
double prism_gravity_kernel(const Box& prism, const Vec3& obs, const GravityKernelConfig& cfg);

/// TMI response (nT) per unit susceptibility of a cell treated as a point
/// dipole at its centre, magnetised along the ambient field.
double dipole_tmi_kernel(const Box& cell, const Vec3& obs, const MagneticKernelConfig& cfg);

class LinearOperator {
 public:
  virtual ~LinearOperator() = default;

  virtual std::size_t rows() const noexcept = 0;
  virtual std::size_t cols() const noexcept = 0;
  virtual void apply(std::span<const double> x, std::span<double> y) const = 0;
  virtual void adjoint(std::span<const double> w, std::span<double> x) const = 0;

  std::vector<double> apply(std::span<const double> x) const;
  std::vector<double> adjoint(std::span<const double> w) const;

  // sum_i w_i A_ij^2 per column; the default probes unit vectors.
  virtual std::vector<double> weighted_column_sq_norms(std::span<const double> row_weights) const;

 protected:
  void check_apply_shapes(std::span<const double> x, std::span<double> y) const;
  void check_adjoint_shapes(std::span<const double> w, std::span<double> x) const;
};

enum class EvalMode { Auto, Dense, MatrixFree };

/// Single-property sensitivity matrix, either materialised or recomputed
/// entry by entry on every apply. Both paths sum in the same order and give
/// identical results.
class SensitivityOperator final : public LinearOperator {
 public:
  using EntryFn = std::function<double(std::size_t row, std::size_t col)>;

  SensitivityOperator(std::size_t rows, std::size_t cols, EntryFn entry, EvalMode mode,
                      std::optional<VoxelGrid> grid = std::nullopt);

  static SensitivityOperator from_matrix(std::size_t rows, std::size_t cols,
                                         std::vector<double> row_major,
                                         std::optional<VoxelGrid> grid = std::nullopt);

  std::size_t rows() const noexcept override { return rows_; }
  std::size_t cols() const noexcept override { return cols_; }
  EvalMode mode() const noexcept { return dense_.empty() ? EvalMode::MatrixFree : EvalMode::Dense; }
  const std::optional<VoxelGrid>& grid() const noexcept { return grid_; }
  double entry(std::size_t row, std::size_t col) const;

  void apply(std::span<const double> x, std::span<double> y) const override;
  void adjoint(std::span<const double> w, std::span<double> x) const override;
  std::vector<double> weighted_column_sq_norms(std::span<const double> row_weights) const override;
  using LinearOperator::adjoint;
  using LinearOperator::apply;

 private:
  std::size_t rows_;
  std::size_t cols_;
  EntryFn entry_;
  std::vector<double> dense_;
  std::optional<VoxelGrid> grid_;
};

// Dense below 32^3 cells and 64^2 stations, matrix-free beyond.
EvalMode resolve_mode(EvalMode requested, std::size_t rows, std::size_t cols) noexcept;

SensitivityOperator assemble_gravity_operator(const VoxelGrid& grid, const SurveyGeometry& survey,
                                              const GravityKernelConfig& cfg,
                                              EvalMode mode = EvalMode::Auto);

// Requires every station at least h above the top layer of cell centres.
SensitivityOperator assemble_magnetic_operator(const VoxelGrid& grid,
                                               const SurveyGeometry& survey,
                                               const MagneticKernelConfig& cfg,
                                               EvalMode mode = EvalMode::Auto);

/// Block-diagonal [G_rho 0; 0 G_chi] acting on m = [rho; chi].
class JointOperator final : public LinearOperator {
 public:
  JointOperator(std::shared_ptr<const SensitivityOperator> grav,
                std::shared_ptr<const SensitivityOperator> mag);

  std::size_t rows() const noexcept override { return grav_->rows() + mag_->rows(); }
  std::size_t cols() const noexcept override { return grav_->cols() + mag_->cols(); }
  const SensitivityOperator& gravity() const noexcept { return *grav_; }
  const SensitivityOperator& magnetic() const noexcept { return *mag_; }

  void apply(std::span<const double> x, std::span<double> y) const override;
  void adjoint(std::span<const double> w, std::span<double> x) const override;
  std::vector<double> weighted_column_sq_norms(std::span<const double> row_weights) const override;
  using LinearOperator::adjoint;
  using LinearOperator::apply;

 private:
  std::shared_ptr<const SensitivityOperator> grav_;
  std::shared_ptr<const SensitivityOperator> mag_;
};

JointOperator assemble_joint_operator(const VoxelGrid& grid, const SurveyGeometry& survey,
                                      const GravityKernelConfig& gcfg,
                                      const MagneticKernelConfig& mcfg,
                                      EvalMode mode = EvalMode::Auto);

/// Independent Gaussian noise; one standard deviation per observation.
struct NoiseModel {
  std::vector<double> sigma_grav;
  std::vector<double> sigma_mag;

  static NoiseModel broadcast(std::size_t n_grav, double sigma_grav, std::size_t n_mag,
                              double sigma_mag);
  void validate() const;
  std::vector<double> stacked() const;
};

/// Observed gravity and TMI on one survey, plus the configuration that
/// produced (or describes) them.
struct FieldData {
  SurveyGeometry survey;
  std::vector<double> grav;
  std::vector<double> mag;
  NoiseModel noise;
  GravityKernelConfig gravity;
  MagneticKernelConfig magnetic;

  void validate() const;
  std::vector<double> stacked() const;
};

// y = G m + eps, eps ~ N(0, diag(sigma^2)); deterministic per seed.
std::vector<double> simulate(const LinearOperator& op, std::span<const double> m,
                             std::span<const double> sigma, std::uint64_t seed);

FieldData simulate(const JointOperator& op, const JointModel& model, const NoiseModel& noise,
                   const SurveyGeometry& survey, const GravityKernelConfig& gcfg,
                   const MagneticKernelConfig& mcfg, std::uint64_t seed);

// 1/2 (y - Gm)^T Sigma^-1 (y - Gm); normalising constants dropped.
double neg_log_likelihood(const LinearOperator& op, std::span<const double> m,
                          std::span<const double> y, std::span<const double> sigma);

// G^T Sigma^-1 (Gm - y), the gradient of neg_log_likelihood.
std::vector<double> misfit_gradient(const LinearOperator& op, std::span<const double> m,
                                    std::span<const double> y, std::span<const double> sigma);

}  // namespace geoinv
