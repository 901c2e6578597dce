#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "geoinv/core/error.hpp"

namespace geoinv {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

struct CellIndex {
  std::size_t ix = 0;
  std::size_t iy = 0;
  std::size_t iz = 0;

  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

// Axis-aligned box, min corner first.
struct Box {
  Vec3 lo;
  Vec3 hi;
};

/// Uniform cubic voxel grid. z is positive upward; `origin` is the minimum
/// corner. Cells are numbered x fastest: ix + nx * (iy + ny * iz).
class VoxelGrid {
 public:
  VoxelGrid(std::size_t nx, std::size_t ny, std::size_t nz, double h, Vec3 origin = {});

  std::size_t nx() const noexcept { return nx_; }
  std::size_t ny() const noexcept { return ny_; }
  std::size_t nz() const noexcept { return nz_; }
  std::size_t size() const noexcept { return nx_ * ny_ * nz_; }
  double h() const noexcept { return h_; }
  double cell_volume() const noexcept { return h_ * h_ * h_; }
  const Vec3& origin() const noexcept { return origin_; }

  std::size_t flatten(std::size_t ix, std::size_t iy, std::size_t iz) const noexcept {
    return ix + nx_ * (iy + ny_ * iz);
  }
  std::size_t flatten(CellIndex c) const noexcept { return flatten(c.ix, c.iy, c.iz); }
  CellIndex unflatten(std::size_t linear) const noexcept;

  Vec3 cell_center(std::size_t linear) const noexcept;
  Box cell_box(std::size_t linear) const noexcept;
  double top() const noexcept { return origin_.z + static_cast<double>(nz_) * h_; }
  Box bounds() const noexcept;

  friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;

 private:
  std::size_t nx_;
  std::size_t ny_;
  std::size_t nz_;
  double h_;
  Vec3 origin_;
};

// LogSusceptibility holds log10(chi + offset) values.
enum class PropertyKind { Density, Susceptibility, Phase, LogSusceptibility };

const char* to_string(PropertyKind kind) noexcept;
PropertyKind property_kind_from_string(const std::string& name);

/// Per-cell property field in grid linear order.
class PropertyVolume {
 public:
  PropertyVolume(VoxelGrid grid, PropertyKind kind);
  PropertyVolume(VoxelGrid grid, PropertyKind kind, std::vector<double> values);

  const VoxelGrid& grid() const noexcept { return grid_; }
  PropertyKind kind() const noexcept { return kind_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  friend bool operator==(const PropertyVolume&, const PropertyVolume&) = default;

 private:
  VoxelGrid grid_;
  PropertyKind kind_;
  std::vector<double> values_;
};

/// Density and susceptibility on one grid; stacks to m = [rho; chi].
class JointModel {
 public:
  JointModel(PropertyVolume rho, PropertyVolume chi);

  const VoxelGrid& grid() const noexcept { return rho_.grid(); }
  const PropertyVolume& rho() const noexcept { return rho_; }
  const PropertyVolume& chi() const noexcept { return chi_; }

  friend bool operator==(const JointModel&, const JointModel&) = default;

 private:
  PropertyVolume rho_;
  PropertyVolume chi_;
};

std::vector<double> stack(const JointModel& m);
JointModel unstack(std::span<const double> v, const VoxelGrid& grid);

/// Observation stations, all strictly above the top face of `grid`.
class SurveyGeometry {
 public:
  explicit SurveyGeometry(std::vector<Vec3> points);
  SurveyGeometry(std::vector<Vec3> points, const VoxelGrid& grid);

  std::span<const Vec3> points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  const Vec3& operator[](std::size_t i) const noexcept { return points_[i]; }

  // Throws SingularGeometry if any point is not strictly above the grid.
  void check_against(const VoxelGrid& grid) const;

  friend bool operator==(const SurveyGeometry&, const SurveyGeometry&) = default;

 private:
  std::vector<Vec3> points_;
};

// Regular nsx x nsy station layout centred over the grid at `height`
// above its top face.
SurveyGeometry regular_survey(const VoxelGrid& grid, std::size_t nsx, std::size_t nsy,
                              double height);

struct ChiBounds {
  double chi_min = 0.0;
  double chi_max = 1.09;

  void validate() const;
  double half_range() const noexcept { return 0.5 * (chi_max - chi_min); }
  double midpoint() const noexcept { return 0.5 * (chi_max + chi_min); }
};

// Affine susceptibility <-> phase maps. Out-of-range values are not clamped.
double chi_to_phi(double chi, const ChiBounds& b) noexcept;
double phi_to_chi(double phi, const ChiBounds& b) noexcept;
std::vector<double> chi_to_phi(std::span<const double> chi, const ChiBounds& b);
std::vector<double> phi_to_chi(std::span<const double> phi, const ChiBounds& b);
PropertyVolume chi_to_phi(const PropertyVolume& chi, const ChiBounds& b);
PropertyVolume phi_to_chi(const PropertyVolume& phi, const ChiBounds& b);

inline constexpr double kDefaultLogOffset = 1e-4;

// x = log10(chi + offset), tagged LogSusceptibility.
PropertyVolume log_transform(const PropertyVolume& chi, double offset = kDefaultLogOffset);
PropertyVolume inverse_log_transform(const PropertyVolume& x, double offset = kDefaultLogOffset);

}  // namespace geoinv
