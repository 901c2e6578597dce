#include "geoinv/core/forward.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <string>

#include "geoinv/core/parallel.hpp"
#include "geoinv/core/random.hpp"

namespace geoinv {

void GravityKernelConfig::validate() const {
  if (!(G > 0.0) || !std::isfinite(G)) {
    fail(ErrorCode::InvalidArgument, "gravitational constant must be positive");
  }
}

void MagneticKernelConfig::validate() const {
  if (!(B0 > 0.0) || !std::isfinite(B0)) {
    fail(ErrorCode::InvalidArgument, "ambient field B0 must be positive");
  }
  if (!(inclination_deg >= -90.0 && inclination_deg <= 90.0)) {
    fail(ErrorCode::InvalidArgument, "inclination must lie in [-90, 90] degrees");
  }
  if (!(declination_deg >= -180.0 && declination_deg <= 180.0)) {
    fail(ErrorCode::InvalidArgument, "declination must lie in [-180, 180] degrees");
  }
}

Vec3 MagneticKernelConfig::direction() const noexcept {
  const double inc = inclination_deg * std::numbers::pi / 180.0;
  const double dec = declination_deg * std::numbers::pi / 180.0;
  return {std::cos(inc) * std::cos(dec), std::cos(inc) * std::sin(dec), -std::sin(inc)};
}

namespace {

// ln(a + sqrt(a^2 + b2)) without cancellation when a < 0.
double log_a_plus_r(double a, double r, double b2) {
  if (a >= 0.0) return std::log(a + r);
  return std::log(b2) - std::log(r - a);
}

// Antiderivative term of the prism formula at one corner.
double corner_term(double u, double v, double w) {
  const double u2 = u * u;
  const double v2 = v * v;
  const double w2 = w * w;
  const double r = std::sqrt(u2 + v2 + w2);
  double t = 0.0;
  if (u != 0.0) t += u * log_a_plus_r(v, r, u2 + w2);
  if (v != 0.0) t += v * log_a_plus_r(u, r, v2 + w2);
  if (w != 0.0) t -= w * std::atan(u * v / (w * r));
  return t;
}

bool inside_closed(const Box& b, const Vec3& p) {
  return p.x >= b.lo.x && p.x <= b.hi.x && p.y >= b.lo.y && p.y <= b.hi.y && p.z >= b.lo.z &&
         p.z <= b.hi.z;
}

}  // namespace

double prism_gravity_kernel(const Box& prism, const Vec3& obs, const GravityKernelConfig& cfg) {
  if (!(prism.hi.x > prism.lo.x) || !(prism.hi.y > prism.lo.y) || !(prism.hi.z > prism.lo.z)) {
    fail(ErrorCode::DegenerateCell, "prism has zero or negative extent");
  }
  if (inside_closed(prism, obs)) {
    fail(ErrorCode::SingularGeometry, "observation lies inside or on the prism");
  }
  const double xs[2] = {prism.lo.x - obs.x, prism.hi.x - obs.x};
  const double ys[2] = {prism.lo.y - obs.y, prism.hi.y - obs.y};
  const double zs[2] = {prism.lo.z - obs.z, prism.hi.z - obs.z};
  double sum = 0.0;
  for (int k = 0; k < 2; ++k) {
    for (int l = 0; l < 2; ++l) {
      for (int m = 0; m < 2; ++m) {
        // (-1)^(k+l+m) with 1-based indices
        const double sign = ((k + l + m) % 2 == 1) ? 1.0 : -1.0;
        sum += sign * corner_term(xs[k], ys[l], zs[m]);
      }
    }
  }
  return cfg.G * sum * cfg.unit_scale();
}

double dipole_tmi_kernel(const Box& cell, const Vec3& obs, const MagneticKernelConfig& cfg) {
  const double hx = cell.hi.x - cell.lo.x;
  const double hy = cell.hi.y - cell.lo.y;
  const double hz = cell.hi.z - cell.lo.z;
  if (!(hx > 0.0) || !(hy > 0.0) || !(hz > 0.0)) {
    fail(ErrorCode::DegenerateCell, "cell has zero or negative extent");
  }
  const Vec3 c{0.5 * (cell.lo.x + cell.hi.x), 0.5 * (cell.lo.y + cell.hi.y),
               0.5 * (cell.lo.z + cell.hi.z)};
  const double rx = obs.x - c.x;
  const double ry = obs.y - c.y;
  const double rz = obs.z - c.z;
  const double r = std::sqrt(rx * rx + ry * ry + rz * rz);
  const double min_extent = std::min(hx, std::min(hy, hz));
  if (!(r >= 0.5 * min_extent)) {
    fail(ErrorCode::NearField, "observation closer than h/2 to cell centre");
  }
  const Vec3 d = cfg.direction();
  const double cosine = (d.x * rx + d.y * ry + d.z * rz) / r;
  const double volume = hx * hy * hz;
  return cfg.B0 * volume / (4.0 * std::numbers::pi) * (3.0 * cosine * cosine - 1.0) / (r * r * r);
}

std::vector<double> LinearOperator::apply(std::span<const double> x) const {
  std::vector<double> y(rows());
  apply(x, y);
  return y;
}

std::vector<double> LinearOperator::adjoint(std::span<const double> w) const {
  std::vector<double> x(cols());
  adjoint(w, x);
  return x;
}

std::vector<double> LinearOperator::weighted_column_sq_norms(
    std::span<const double> row_weights) const {
  if (row_weights.size() != rows()) fail(ErrorCode::DimensionMismatch, "row weight length mismatch");
  std::vector<double> out(cols(), 0.0);
  std::vector<double> e(cols(), 0.0);
  std::vector<double> y(rows());
  for (std::size_t j = 0; j < cols(); ++j) {
    e[j] = 1.0;
    apply(e, y);
    e[j] = 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += row_weights[i] * y[i] * y[i];
    out[j] = acc;
  }
  return out;
}

void LinearOperator::check_apply_shapes(std::span<const double> x, std::span<double> y) const {
  if (x.size() != cols() || y.size() != rows()) {
    fail(ErrorCode::DimensionMismatch, "apply: operator is " + std::to_string(rows()) + "x" +
                                           std::to_string(cols()) + ", got input " +
                                           std::to_string(x.size()) + " output " +
                                           std::to_string(y.size()));
  }
}

void LinearOperator::check_adjoint_shapes(std::span<const double> w, std::span<double> x) const {
  if (w.size() != rows() || x.size() != cols()) {
    fail(ErrorCode::DimensionMismatch, "adjoint: operator is " + std::to_string(rows()) + "x" +
                                           std::to_string(cols()) + ", got input " +
                                           std::to_string(w.size()) + " output " +
                                           std::to_string(x.size()));
  }
}

SensitivityOperator::SensitivityOperator(std::size_t rows, std::size_t cols, EntryFn entry,
                                         EvalMode mode, std::optional<VoxelGrid> grid)
    : rows_(rows), cols_(cols), entry_(std::move(entry)), grid_(std::move(grid)) {
  if (rows_ == 0 || cols_ == 0) fail(ErrorCode::InvalidArgument, "operator has an empty shape");
  if (grid_ && grid_->size() != cols_) {
    fail(ErrorCode::DimensionMismatch, "operator columns do not match grid size");
  }
  if (resolve_mode(mode, rows_, cols_) == EvalMode::Dense) {
    dense_.resize(rows_ * cols_);
    // Entry functions may throw; capture inside the parallel region.
    std::exception_ptr error;
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows_); ++i) {
      try {
        const std::size_t row = static_cast<std::size_t>(i);
        for (std::size_t j = 0; j < cols_; ++j) dense_[row * cols_ + j] = entry_(row, j);
      } catch (...) {
#pragma omp critical
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
  } else {
    // Probe every entry once so geometry errors surface at assembly time.
    std::exception_ptr error;
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows_); ++i) {
      try {
        for (std::size_t j = 0; j < cols_; ++j) (void)entry_(static_cast<std::size_t>(i), j);
      } catch (...) {
#pragma omp critical
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
  }
}

SensitivityOperator SensitivityOperator::from_matrix(std::size_t rows, std::size_t cols,
                                                     std::vector<double> row_major,
                                                     std::optional<VoxelGrid> grid) {
  if (row_major.size() != rows * cols) {
    fail(ErrorCode::DimensionMismatch, "matrix storage does not match its shape");
  }
  auto storage = std::make_shared<const std::vector<double>>(std::move(row_major));
  return SensitivityOperator(
      rows, cols, [storage, cols](std::size_t i, std::size_t j) { return (*storage)[i * cols + j]; },
      EvalMode::Dense, std::move(grid));
}

double SensitivityOperator::entry(std::size_t row, std::size_t col) const {
  if (row >= rows_ || col >= cols_) fail(ErrorCode::InvalidArgument, "entry index out of range");
  return dense_.empty() ? entry_(row, col) : dense_[row * cols_ + col];
}

void SensitivityOperator::apply(std::span<const double> x, std::span<double> y) const {
  check_apply_shapes(x, y);
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows_); ++i) {
    const std::size_t row = static_cast<std::size_t>(i);
    double acc = 0.0;
    if (dense_.empty()) {
      for (std::size_t j = 0; j < cols_; ++j) acc += entry_(row, j) * x[j];
    } else {
      const double* a = dense_.data() + row * cols_;
      for (std::size_t j = 0; j < cols_; ++j) acc += a[j] * x[j];
    }
    y[row] = acc;
  }
}

void SensitivityOperator::adjoint(std::span<const double> w, std::span<double> x) const {
  check_adjoint_shapes(w, x);
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(cols_); ++j) {
    const std::size_t col = static_cast<std::size_t>(j);
    double acc = 0.0;
    if (dense_.empty()) {
      for (std::size_t i = 0; i < rows_; ++i) acc += entry_(i, col) * w[i];
    } else {
      for (std::size_t i = 0; i < rows_; ++i) acc += dense_[i * cols_ + col] * w[i];
    }
    x[col] = acc;
  }
}

std::vector<double> SensitivityOperator::weighted_column_sq_norms(
    std::span<const double> row_weights) const {
  if (row_weights.size() != rows_) fail(ErrorCode::DimensionMismatch, "row weight length mismatch");
  std::vector<double> out(cols_, 0.0);
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(cols_); ++j) {
    const std::size_t col = static_cast<std::size_t>(j);
    double acc = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) {
      const double a = dense_.empty() ? entry_(i, col) : dense_[i * cols_ + col];
      acc += row_weights[i] * a * a;
    }
    out[col] = acc;
  }
  return out;
}

EvalMode resolve_mode(EvalMode requested, std::size_t rows, std::size_t cols) noexcept {
  if (requested != EvalMode::Auto) return requested;
  constexpr std::size_t kMaxCells = 32 * 32 * 32;
  constexpr std::size_t kMaxStations = 64 * 64;
  return (cols <= kMaxCells && rows <= kMaxStations) ? EvalMode::Dense : EvalMode::MatrixFree;
}

SensitivityOperator assemble_gravity_operator(const VoxelGrid& grid, const SurveyGeometry& survey,
                                              const GravityKernelConfig& cfg, EvalMode mode) {
  cfg.validate();
  survey.check_against(grid);
  auto entry = [grid, survey, cfg](std::size_t i, std::size_t j) {
    return prism_gravity_kernel(grid.cell_box(j), survey[i], cfg);
  };
  return SensitivityOperator(survey.size(), grid.size(), entry, mode, grid);
}

SensitivityOperator assemble_magnetic_operator(const VoxelGrid& grid,
                                               const SurveyGeometry& survey,
                                               const MagneticKernelConfig& cfg, EvalMode mode) {
  cfg.validate();
  survey.check_against(grid);
  const double top_centres = grid.top() - 0.5 * grid.h();
  for (std::size_t i = 0; i < survey.size(); ++i) {
    if (survey[i].z - top_centres < grid.h()) {
      fail(ErrorCode::NearField, "station " + std::to_string(i) +
                                     " is closer than h to the top layer of cell centres");
    }
  }
  auto entry = [grid, survey, cfg](std::size_t i, std::size_t j) {
    return dipole_tmi_kernel(grid.cell_box(j), survey[i], cfg);
  };
  return SensitivityOperator(survey.size(), grid.size(), entry, mode, grid);
}

JointOperator::JointOperator(std::shared_ptr<const SensitivityOperator> grav,
                             std::shared_ptr<const SensitivityOperator> mag)
    : grav_(std::move(grav)), mag_(std::move(mag)) {
  if (!grav_ || !mag_) fail(ErrorCode::InvalidArgument, "joint operator needs two blocks");
  if (grav_->cols() != mag_->cols()) {
    fail(ErrorCode::DimensionMismatch, "gravity and magnetic operators act on different grids");
  }
  if (grav_->grid().has_value() != mag_->grid().has_value() ||
      (grav_->grid() && !(*grav_->grid() == *mag_->grid()))) {
    fail(ErrorCode::DimensionMismatch, "gravity and magnetic operators act on different grids");
  }
}

void JointOperator::apply(std::span<const double> x, std::span<double> y) const {
  check_apply_shapes(x, y);
  const std::size_t n = grav_->cols();
  grav_->apply(x.subspan(0, n), y.subspan(0, grav_->rows()));
  mag_->apply(x.subspan(n), y.subspan(grav_->rows()));
}

void JointOperator::adjoint(std::span<const double> w, std::span<double> x) const {
  check_adjoint_shapes(w, x);
  const std::size_t n = grav_->cols();
  grav_->adjoint(w.subspan(0, grav_->rows()), x.subspan(0, n));
  mag_->adjoint(w.subspan(grav_->rows()), x.subspan(n));
}

std::vector<double> JointOperator::weighted_column_sq_norms(
    std::span<const double> row_weights) const {
  if (row_weights.size() != rows()) fail(ErrorCode::DimensionMismatch, "row weight length mismatch");
  std::vector<double> out = grav_->weighted_column_sq_norms(row_weights.subspan(0, grav_->rows()));
  const std::vector<double> m = mag_->weighted_column_sq_norms(row_weights.subspan(grav_->rows()));
  out.insert(out.end(), m.begin(), m.end());
  return out;
}

JointOperator assemble_joint_operator(const VoxelGrid& grid, const SurveyGeometry& survey,
                                      const GravityKernelConfig& gcfg,
                                      const MagneticKernelConfig& mcfg, EvalMode mode) {
  return JointOperator(
      std::make_shared<const SensitivityOperator>(assemble_gravity_operator(grid, survey, gcfg, mode)),
      std::make_shared<const SensitivityOperator>(assemble_magnetic_operator(grid, survey, mcfg, mode)));
}

NoiseModel NoiseModel::broadcast(std::size_t n_grav, double sigma_grav, std::size_t n_mag,
                                 double sigma_mag) {
  NoiseModel n{std::vector<double>(n_grav, sigma_grav), std::vector<double>(n_mag, sigma_mag)};
  n.validate();
  return n;
}

void NoiseModel::validate() const {
  for (double s : sigma_grav) {
    if (!(s > 0.0) || !std::isfinite(s)) fail(ErrorCode::InvalidArgument, "gravity sigma must be > 0");
  }
  for (double s : sigma_mag) {
    if (!(s > 0.0) || !std::isfinite(s)) fail(ErrorCode::InvalidArgument, "magnetic sigma must be > 0");
  }
}

std::vector<double> NoiseModel::stacked() const {
  std::vector<double> s(sigma_grav);
  s.insert(s.end(), sigma_mag.begin(), sigma_mag.end());
  return s;
}

void FieldData::validate() const {
  noise.validate();
  if (grav.size() != survey.size() || mag.size() != survey.size()) {
    fail(ErrorCode::DimensionMismatch, "field data length does not match survey size");
  }
  if (noise.sigma_grav.size() != grav.size() || noise.sigma_mag.size() != mag.size()) {
    fail(ErrorCode::DimensionMismatch, "noise model length does not match field data");
  }
}

std::vector<double> FieldData::stacked() const {
  std::vector<double> y(grav);
  y.insert(y.end(), mag.begin(), mag.end());
  return y;
}

std::vector<double> simulate(const LinearOperator& op, std::span<const double> m,
                             std::span<const double> sigma, std::uint64_t seed) {
  if (sigma.size() != op.rows()) {
    fail(ErrorCode::DimensionMismatch, "noise vector length does not match operator rows");
  }
  std::vector<double> y = op.apply(m);
  NormalSource normal(seed);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double eps = normal();
    if (sigma[i] > 0.0) y[i] += sigma[i] * eps;
  }
  return y;
}

FieldData simulate(const JointOperator& op, const JointModel& model, const NoiseModel& noise,
                   const SurveyGeometry& survey, const GravityKernelConfig& gcfg,
                   const MagneticKernelConfig& mcfg, std::uint64_t seed) {
  noise.validate();
  if (op.gravity().rows() != survey.size() || op.magnetic().rows() != survey.size()) {
    fail(ErrorCode::DimensionMismatch, "operator rows do not match the survey");
  }
  const std::vector<double> m = stack(model);
  const std::vector<double> sigma = noise.stacked();
  const std::vector<double> y = simulate(op, m, sigma, seed);
  const auto split = y.begin() + static_cast<std::ptrdiff_t>(op.gravity().rows());
  FieldData fd{survey, {y.begin(), split}, {split, y.end()}, noise, gcfg, mcfg};
  fd.validate();
  return fd;
}

namespace {

std::vector<double> weighted_residual(const LinearOperator& op, std::span<const double> m,
                                      std::span<const double> y, std::span<const double> sigma) {
  if (y.size() != op.rows() || sigma.size() != op.rows() || m.size() != op.cols()) {
    fail(ErrorCode::DimensionMismatch, "misfit: data, noise and model lengths disagree with operator");
  }
  std::vector<double> r = op.apply(m);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = (r[i] - y[i]) / (sigma[i] * sigma[i]);
  return r;
}

}  // namespace

double neg_log_likelihood(const LinearOperator& op, std::span<const double> m,
                          std::span<const double> y, std::span<const double> sigma) {
  if (y.size() != op.rows() || sigma.size() != op.rows() || m.size() != op.cols()) {
    fail(ErrorCode::DimensionMismatch, "misfit: data, noise and model lengths disagree with operator");
  }
  const std::vector<double> pred = op.apply(m);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double z = (pred[i] - y[i]) / sigma[i];
    acc += z * z;
  }
  return 0.5 * acc;
}

std::vector<double> misfit_gradient(const LinearOperator& op, std::span<const double> m,
                                    std::span<const double> y, std::span<const double> sigma) {
  return op.adjoint(weighted_residual(op, m, y, sigma));
}

}  // namespace geoinv
