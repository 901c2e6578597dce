#include "geoinv/core/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace geoinv {

VoxelGrid::VoxelGrid(std::size_t nx, std::size_t ny, std::size_t nz, double h, Vec3 origin)
    : nx_(nx), ny_(ny), nz_(nz), h_(h), origin_(origin) {
  if (nx == 0 || ny == 0 || nz == 0) {
    fail(ErrorCode::InvalidArgument, "grid cell counts must be >= 1");
  }
  if (!(h > 0.0) || !std::isfinite(h)) {
    fail(ErrorCode::InvalidArgument, "grid spacing h must be positive and finite");
  }
  if (!std::isfinite(origin.x) || !std::isfinite(origin.y) || !std::isfinite(origin.z)) {
    fail(ErrorCode::InvalidArgument, "grid origin must be finite");
  }
}

CellIndex VoxelGrid::unflatten(std::size_t linear) const noexcept {
  const std::size_t ix = linear % nx_;
  const std::size_t rest = linear / nx_;
  return {ix, rest % ny_, rest / ny_};
}

Vec3 VoxelGrid::cell_center(std::size_t linear) const noexcept {
  const CellIndex c = unflatten(linear);
  return {origin_.x + (static_cast<double>(c.ix) + 0.5) * h_,
          origin_.y + (static_cast<double>(c.iy) + 0.5) * h_,
          origin_.z + (static_cast<double>(c.iz) + 0.5) * h_};
}

Box VoxelGrid::cell_box(std::size_t linear) const noexcept {
  const CellIndex c = unflatten(linear);
  const Vec3 lo{origin_.x + static_cast<double>(c.ix) * h_,
                origin_.y + static_cast<double>(c.iy) * h_,
                origin_.z + static_cast<double>(c.iz) * h_};
  return {lo, {lo.x + h_, lo.y + h_, lo.z + h_}};
}

Box VoxelGrid::bounds() const noexcept {
  return {origin_,
          {origin_.x + static_cast<double>(nx_) * h_, origin_.y + static_cast<double>(ny_) * h_,
           top()}};
}

const char* to_string(PropertyKind kind) noexcept {
  switch (kind) {
    case PropertyKind::Density: return "density";
    case PropertyKind::Susceptibility: return "susceptibility";
    case PropertyKind::Phase: return "phase";
    case PropertyKind::LogSusceptibility: return "log-susceptibility";
  }
  return "unknown";
}

PropertyKind property_kind_from_string(const std::string& name) {
  if (name == "density") return PropertyKind::Density;
  if (name == "susceptibility") return PropertyKind::Susceptibility;
  if (name == "phase") return PropertyKind::Phase;
  if (name == "log-susceptibility") return PropertyKind::LogSusceptibility;
  fail(ErrorCode::Format, "unknown property kind '" + name + "'");
}

namespace {

void check_values(PropertyKind kind, std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) fail(ErrorCode::Domain, "property values must be finite");
    if (kind == PropertyKind::Susceptibility && v < 0.0) {
      fail(ErrorCode::Domain, "susceptibility must be non-negative");
    }
  }
}

}  // namespace

PropertyVolume::PropertyVolume(VoxelGrid grid, PropertyKind kind)
    : grid_(grid), kind_(kind), values_(grid.size(), 0.0) {}

PropertyVolume::PropertyVolume(VoxelGrid grid, PropertyKind kind, std::vector<double> values)
    : grid_(grid), kind_(kind), values_(std::move(values)) {
  if (values_.size() != grid_.size()) {
    fail(ErrorCode::DimensionMismatch, "volume has " + std::to_string(values_.size()) +
                                           " values for a grid of " +
                                           std::to_string(grid_.size()) + " cells");
  }
  check_values(kind_, values_);
}

JointModel::JointModel(PropertyVolume rho, PropertyVolume chi)
    : rho_(std::move(rho)), chi_(std::move(chi)) {
  if (!(rho_.grid() == chi_.grid())) {
    fail(ErrorCode::DimensionMismatch, "density and susceptibility grids differ");
  }
  if (rho_.kind() != PropertyKind::Density || chi_.kind() != PropertyKind::Susceptibility) {
    fail(ErrorCode::InvalidArgument, "joint model needs a density and a susceptibility volume");
  }
}

std::vector<double> stack(const JointModel& m) {
  std::vector<double> v;
  v.reserve(2 * m.grid().size());
  v.insert(v.end(), m.rho().values().begin(), m.rho().values().end());
  v.insert(v.end(), m.chi().values().begin(), m.chi().values().end());
  return v;
}

JointModel unstack(std::span<const double> v, const VoxelGrid& grid) {
  const std::size_t n = grid.size();
  if (v.size() != 2 * n) {
    fail(ErrorCode::DimensionMismatch, "stacked model length " + std::to_string(v.size()) +
                                           " != 2N = " + std::to_string(2 * n));
  }
  return {PropertyVolume(grid, PropertyKind::Density, {v.begin(), v.begin() + n}),
          PropertyVolume(grid, PropertyKind::Susceptibility, {v.begin() + n, v.end()})};
}

SurveyGeometry::SurveyGeometry(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.empty()) fail(ErrorCode::InvalidArgument, "survey has no points");
  for (const Vec3& p : points_) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      fail(ErrorCode::InvalidArgument, "survey point is not finite");
    }
  }
}

SurveyGeometry::SurveyGeometry(std::vector<Vec3> points, const VoxelGrid& grid)
    : SurveyGeometry(std::move(points)) {
  check_against(grid);
}

void SurveyGeometry::check_against(const VoxelGrid& grid) const {
  const double top = grid.top();
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!(points_[i].z > top)) {
      fail(ErrorCode::SingularGeometry, "survey point " + std::to_string(i) +
                                            " is not strictly above the grid top face");
    }
  }
}

SurveyGeometry regular_survey(const VoxelGrid& grid, std::size_t nsx, std::size_t nsy,
                              double height) {
  if (nsx == 0 || nsy == 0) fail(ErrorCode::InvalidArgument, "survey needs >= 1 station per axis");
  if (!(height > 0.0)) fail(ErrorCode::InvalidArgument, "survey height must be positive");
  const Box b = grid.bounds();
  const double dx = (b.hi.x - b.lo.x) / static_cast<double>(nsx);
  const double dy = (b.hi.y - b.lo.y) / static_cast<double>(nsy);
  std::vector<Vec3> pts;
  pts.reserve(nsx * nsy);
  for (std::size_t j = 0; j < nsy; ++j) {
    for (std::size_t i = 0; i < nsx; ++i) {
      pts.push_back({b.lo.x + (static_cast<double>(i) + 0.5) * dx,
                     b.lo.y + (static_cast<double>(j) + 0.5) * dy, b.hi.z + height});
    }
  }
  return SurveyGeometry(std::move(pts), grid);
}

void ChiBounds::validate() const {
  if (!std::isfinite(chi_min) || !std::isfinite(chi_max) || !(chi_max > chi_min) ||
      chi_min < 0.0) {
    fail(ErrorCode::InvalidBounds, "susceptibility bounds need chi_max > chi_min >= 0");
  }
}

double chi_to_phi(double chi, const ChiBounds& b) noexcept {
  return (2.0 * chi - (b.chi_max + b.chi_min)) / (b.chi_max - b.chi_min);
}

double phi_to_chi(double phi, const ChiBounds& b) noexcept {
  return b.half_range() * phi + b.midpoint();
}

std::vector<double> chi_to_phi(std::span<const double> chi, const ChiBounds& b) {
  b.validate();
  std::vector<double> out(chi.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = chi_to_phi(chi[i], b);
  return out;
}

std::vector<double> phi_to_chi(std::span<const double> phi, const ChiBounds& b) {
  b.validate();
  std::vector<double> out(phi.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = phi_to_chi(phi[i], b);
  return out;
}

PropertyVolume chi_to_phi(const PropertyVolume& chi, const ChiBounds& b) {
  b.validate();
  if (chi.kind() != PropertyKind::Susceptibility) {
    fail(ErrorCode::InvalidArgument, "chi_to_phi expects a susceptibility volume");
  }
  std::vector<double> out(chi.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = chi_to_phi(chi[i], b);
  return {chi.grid(), PropertyKind::Phase, std::move(out)};
}

PropertyVolume phi_to_chi(const PropertyVolume& phi, const ChiBounds& b) {
  b.validate();
  if (phi.kind() != PropertyKind::Phase) {
    fail(ErrorCode::InvalidArgument, "phi_to_chi expects a phase volume");
  }
  std::vector<double> out(phi.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = phi_to_chi(phi[i], b);
    if (out[i] < 0.0) fail(ErrorCode::Domain, "phase value maps below zero susceptibility");
  }
  return {phi.grid(), PropertyKind::Susceptibility, std::move(out)};
}

PropertyVolume log_transform(const PropertyVolume& chi, double offset) {
  if (!(offset > 0.0)) fail(ErrorCode::Domain, "log offset must be positive");
  if (chi.kind() != PropertyKind::Susceptibility) {
    fail(ErrorCode::InvalidArgument, "log_transform expects a susceptibility volume");
  }
  std::vector<double> out(chi.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (chi[i] < 0.0) fail(ErrorCode::Domain, "log transform of negative susceptibility");
    out[i] = std::log10(chi[i] + offset);
  }
  return {chi.grid(), PropertyKind::LogSusceptibility, std::move(out)};
}

PropertyVolume inverse_log_transform(const PropertyVolume& x, double offset) {
  if (!(offset > 0.0)) fail(ErrorCode::Domain, "log offset must be positive");
  if (x.kind() != PropertyKind::LogSusceptibility) {
    fail(ErrorCode::InvalidArgument, "inverse_log_transform expects a log-susceptibility volume");
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::max(0.0, std::pow(10.0, x[i]) - offset);
  }
  return {x.grid(), PropertyKind::Susceptibility, std::move(out)};
}

}  // namespace geoinv
