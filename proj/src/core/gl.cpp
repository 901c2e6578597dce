#include "geoinv/core/gl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "geoinv/core/parallel.hpp"

namespace geoinv {

void GLParams::validate() const {
  if (!(kappa > 0.0) || !std::isfinite(kappa)) fail(ErrorCode::InvalidArgument, "kappa must be > 0");
  if (!(eps > 0.0) || !std::isfinite(eps)) fail(ErrorCode::InvalidArgument, "eps must be > 0");
  if (!(lambda0 >= 0.0)) fail(ErrorCode::InvalidArgument, "lambda0 must be >= 0");
  if (!(gamma >= 0.0)) fail(ErrorCode::InvalidArgument, "gamma must be >= 0");
  if (!(lambda_gl >= 0.0)) fail(ErrorCode::InvalidArgument, "lambda_gl must be >= 0");
}

std::size_t GraphLaplacian::neighbour_count(std::size_t cell) const noexcept {
  const CellIndex c = grid_.unflatten(cell);
  std::size_t n = 0;
  n += c.ix > 0;
  n += c.ix + 1 < grid_.nx();
  n += c.iy > 0;
  n += c.iy + 1 < grid_.ny();
  n += c.iz > 0;
  n += c.iz + 1 < grid_.nz();
  return n;
}

std::vector<std::size_t> GraphLaplacian::neighbours(std::size_t cell) const {
  const CellIndex c = grid_.unflatten(cell);
  const std::size_t sx = 1;
  const std::size_t sy = grid_.nx();
  const std::size_t sz = grid_.nx() * grid_.ny();
  std::vector<std::size_t> out;
  out.reserve(6);
  if (c.ix > 0) out.push_back(cell - sx);
  if (c.ix + 1 < grid_.nx()) out.push_back(cell + sx);
  if (c.iy > 0) out.push_back(cell - sy);
  if (c.iy + 1 < grid_.ny()) out.push_back(cell + sy);
  if (c.iz > 0) out.push_back(cell - sz);
  if (c.iz + 1 < grid_.nz()) out.push_back(cell + sz);
  return out;
}

void GraphLaplacian::apply(std::span<const double> x, std::span<double> y) const {
  const std::size_t n = grid_.size();
  if (x.size() != n || y.size() != n) {
    fail(ErrorCode::DimensionMismatch, "Laplacian apply: length does not match grid");
  }
  const std::size_t nx = grid_.nx();
  const std::size_t ny = grid_.ny();
  const std::size_t nz = grid_.nz();
  const std::size_t sy = nx;
  const std::size_t sz = nx * ny;
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(nz); ++k) {
    const std::size_t iz = static_cast<std::size_t>(k);
    for (std::size_t iy = 0; iy < ny; ++iy) {
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const std::size_t i = ix + sy * iy + sz * iz;
        const double xi = x[i];
        double acc = 0.0;
        if (ix > 0) acc += xi - x[i - 1];
        if (ix + 1 < nx) acc += xi - x[i + 1];
        if (iy > 0) acc += xi - x[i - sy];
        if (iy + 1 < ny) acc += xi - x[i + sy];
        if (iz > 0) acc += xi - x[i - sz];
        if (iz + 1 < nz) acc += xi - x[i + sz];
        y[i] = acc;
      }
    }
  }
}

std::vector<double> GraphLaplacian::apply(std::span<const double> x) const {
  std::vector<double> y(grid_.size());
  apply(x, y);
  return y;
}

double GraphLaplacian::quadratic_form(std::span<const double> x) const {
  if (x.size() != grid_.size()) {
    fail(ErrorCode::DimensionMismatch, "Laplacian quadratic form: length does not match grid");
  }
  const std::size_t nx = grid_.nx();
  const std::size_t ny = grid_.ny();
  const std::size_t sz = nx * ny;
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const CellIndex c = grid_.unflatten(i);
    if (c.ix + 1 < nx) acc += (x[i] - x[i + 1]) * (x[i] - x[i + 1]);
    if (c.iy + 1 < ny) acc += (x[i] - x[i + nx]) * (x[i] - x[i + nx]);
    if (c.iz + 1 < grid_.nz()) acc += (x[i] - x[i + sz]) * (x[i] - x[i + sz]);
  }
  return acc;
}

double double_well(double s) noexcept {
  const double a = s * s - 1.0;
  return 0.25 * a * a;
}

double double_well_prime(double s) noexcept { return s * (s * s - 1.0); }

double double_well_second(double s) noexcept { return 3.0 * s * s - 1.0; }

namespace {

void check_field(const VoxelGrid& grid, std::span<const double> phi) {
  if (phi.size() != grid.size()) {
    fail(ErrorCode::DimensionMismatch, "phase field length " + std::to_string(phi.size()) +
                                           " does not match grid size " +
                                           std::to_string(grid.size()));
  }
  for (double v : phi) {
    if (!std::isfinite(v)) fail(ErrorCode::Domain, "phase field contains non-finite values");
  }
}

}  // namespace

double gl_energy(const VoxelGrid& grid, std::span<const double> phi, const GLParams& p) {
  p.validate();
  check_field(grid, phi);
  const double h2 = grid.h() * grid.h();
  const double gradient_part = p.kappa / (2.0 * h2) * GraphLaplacian(grid).quadratic_form(phi);
  double well = 0.0;
  for (double v : phi) well += (v * v - 1.0) * (v * v - 1.0);
  return grid.cell_volume() * (gradient_part + well / (4.0 * p.eps * p.eps));
}

double gl_energy_per_cell(const VoxelGrid& grid, std::span<const double> phi, const GLParams& p) {
  p.validate();
  check_field(grid, phi);
  const GraphLaplacian lap(grid);
  const double h2 = grid.h() * grid.h();
  double total = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    double pairs = 0.0;
    for (std::size_t j : lap.neighbours(i)) pairs += (phi[i] - phi[j]) * (phi[i] - phi[j]);
    const double a = phi[i] * phi[i] - 1.0;
    total += grid.cell_volume() * (p.kappa / 4.0 * pairs / h2 + a * a / (4.0 * p.eps * p.eps));
  }
  return total;
}

double gl_energy(const PropertyVolume& phi, const GLParams& p) {
  if (phi.kind() != PropertyKind::Phase) {
    fail(ErrorCode::InvalidArgument, "GL energy expects a phase volume");
  }
  return gl_energy(phi.grid(), phi.values(), p);
}

std::vector<double> gl_gradient(const VoxelGrid& grid, std::span<const double> phi,
                                const GLParams& p) {
  p.validate();
  check_field(grid, phi);
  std::vector<double> g = GraphLaplacian(grid).apply(phi);
  const double dv = grid.cell_volume();
  const double a = p.kappa / (grid.h() * grid.h());
  const double b = 1.0 / (p.eps * p.eps);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = dv * (a * g[i] + b * double_well_prime(phi[i]));
  }
  return g;
}

std::vector<double> gl_hessian_apply(const VoxelGrid& grid, std::span<const double> phi,
                                     std::span<const double> v, const GLParams& p) {
  p.validate();
  check_field(grid, phi);
  if (v.size() != phi.size()) fail(ErrorCode::DimensionMismatch, "Hessian direction length mismatch");
  std::vector<double> out = GraphLaplacian(grid).apply(v);
  const double dv = grid.cell_volume();
  const double a = p.kappa / (grid.h() * grid.h());
  const double b = 1.0 / (p.eps * p.eps);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = dv * (a * out[i] + b * double_well_second(phi[i]) * v[i]);
  }
  return out;
}

double allen_cahn_stable_dt(const VoxelGrid& grid, const GLParams& p) {
  p.validate();
  return 1.0 / (12.0 * p.kappa / (grid.h() * grid.h()) + 2.0 / (p.eps * p.eps));
}

namespace {

void check_phase(const PropertyVolume& phi) {
  if (phi.kind() != PropertyKind::Phase) {
    fail(ErrorCode::InvalidArgument, "Allen-Cahn step expects a phase volume");
  }
}

// Explicit drift step in place; returns whether dt exceeds the bound.
bool drift_update(const VoxelGrid& grid, std::span<double> phi, double dt, const GLParams& p) {
  if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorCode::Domain, "time step must be > 0");
  const std::vector<double> g = gl_gradient(grid, phi, p);
  const double scale = dt / grid.cell_volume();
  for (std::size_t i = 0; i < phi.size(); ++i) phi[i] -= scale * g[i];
  return dt > allen_cahn_stable_dt(grid, p);
}

}  // namespace

AllenCahnStep allen_cahn_step(const PropertyVolume& phi, double dt, const GLParams& p) {
  check_phase(phi);
  std::vector<double> next(phi.values().begin(), phi.values().end());
  const bool flagged = drift_update(phi.grid(), next, dt, p);
  return {PropertyVolume(phi.grid(), PropertyKind::Phase, std::move(next)), flagged};
}

void stochastic_allen_cahn_update(const VoxelGrid& grid, std::span<double> phi, double dt,
                                  double temperature, NormalSource& noise, const GLParams& p) {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    fail(ErrorCode::Domain, "temperature must be >= 0");
  }
  drift_update(grid, phi, dt, p);
  if (temperature == 0.0) return;
  const double amplitude = std::sqrt(2.0 * temperature * dt / grid.cell_volume());
  for (double& v : phi) v += amplitude * noise();
}

AllenCahnStep stochastic_allen_cahn_step(const PropertyVolume& phi, double dt, double temperature,
                                         NormalSource& noise, const GLParams& p) {
  check_phase(phi);
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    fail(ErrorCode::Domain, "temperature must be >= 0");
  }
  std::vector<double> next(phi.values().begin(), phi.values().end());
  stochastic_allen_cahn_update(phi.grid(), next, dt, temperature, noise, p);
  const bool flagged = dt > allen_cahn_stable_dt(phi.grid(), p);
  return {PropertyVolume(phi.grid(), PropertyKind::Phase, std::move(next)), flagged};
}

AllenCahnStep stochastic_allen_cahn_step(const PropertyVolume& phi, double dt, double temperature,
                                         std::uint64_t seed, const GLParams& p) {
  NormalSource noise(seed);
  return stochastic_allen_cahn_step(phi, dt, temperature, noise, p);
}

std::vector<double> gl_prior_score_chi(const VoxelGrid& grid, std::span<const double> chi,
                                       const ChiBounds& b, const GLParams& p) {
  b.validate();
  p.validate();
  if (chi.size() != grid.size()) {
    fail(ErrorCode::DimensionMismatch, "susceptibility block length does not match grid");
  }
  std::vector<double> score(chi.size(), 0.0);
  if (p.lambda_gl == 0.0) return score;
  const std::vector<double> phi = chi_to_phi(chi, b);
  const std::vector<double> g = gl_gradient(grid, phi, p);
  const double dphi_dchi = 2.0 / (b.chi_max - b.chi_min);
  for (std::size_t i = 0; i < score.size(); ++i) score[i] = -p.lambda_gl * dphi_dchi * g[i];
  return score;
}

std::vector<double> gl_prior_score(const JointModel& m, const ChiBounds& b, const GLParams& p) {
  const std::size_t n = m.grid().size();
  std::vector<double> score(2 * n, 0.0);
  const std::vector<double> chi_score = gl_prior_score_chi(m.grid(), m.chi().values(), b, p);
  std::copy(chi_score.begin(), chi_score.end(), score.begin() + static_cast<std::ptrdiff_t>(n));
  return score;
}

double lambda_schedule(double t, const GLParams& p) noexcept {
  if (std::isnan(t)) return 0.0;
  const double s = std::clamp(1.0 - t, 0.0, 1.0);
  return p.lambda0 * std::pow(s, p.gamma);
}

std::vector<double> gl_loss_weights(std::span<const double> energies, double lambda,
                                    LossWeightClamp clamp) {
  if (energies.size() < 2) {
    fail(ErrorCode::InvalidArgument, "loss reweighting needs a batch of at least 2 samples");
  }
  if (!(clamp.lo > 0.0) || !(clamp.hi >= clamp.lo)) {
    fail(ErrorCode::InvalidArgument, "weight clamp needs 0 < lo <= hi");
  }
  for (double e : energies) {
    if (!std::isfinite(e)) fail(ErrorCode::Domain, "GL energies must be finite");
  }
  const double n = static_cast<double>(energies.size());
  const double mean = std::accumulate(energies.begin(), energies.end(), 0.0) / n;
  double var = 0.0;
  for (double e : energies) var += (e - mean) * (e - mean);
  var /= n;
  std::vector<double> w(energies.size(), 1.0);
  if (var == 0.0) return w;
  const double sd = std::sqrt(var);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double standardized = (energies[i] - mean) / sd;
    w[i] = std::clamp(std::exp(-lambda * standardized), clamp.lo, clamp.hi);
  }
  return w;
}

double weighted_loss(std::span<const double> losses, std::span<const double> weights) {
  if (losses.size() != weights.size() || losses.empty()) {
    fail(ErrorCode::DimensionMismatch, "losses and weights must be non-empty and equal length");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    num += weights[i] * losses[i];
    den += weights[i];
  }
  if (!(den > 0.0)) fail(ErrorCode::Numeric, "weights sum to zero");
  return num / den;
}

double modica_mortola_energy(std::span<const double> profile, double dx, double eps) {
  if (!(dx > 0.0) || !(eps > 0.0)) fail(ErrorCode::InvalidArgument, "dx and eps must be > 0");
  double grad = 0.0;
  for (std::size_t i = 0; i + 1 < profile.size(); ++i) {
    const double d = (profile[i + 1] - profile[i]) / dx;
    grad += d * d;
  }
  double well = 0.0;
  for (double v : profile) well += double_well(v);
  return dx * (0.5 * eps * grad + well / eps);
}

std::vector<InterfaceEnergy> interface_energy_diagnostic(std::size_t cells_per_width,
                                                         std::span<const double> eps_list) {
  if (cells_per_width < 8) {
    fail(ErrorCode::Resolution, "interface needs at least 8 cells per width sqrt(2) eps");
  }
  std::vector<InterfaceEnergy> out;
  out.reserve(eps_list.size());
  for (double eps : eps_list) {
    if (!(eps > 0.0) || !std::isfinite(eps)) fail(ErrorCode::InvalidArgument, "eps must be > 0");
    const double dx = std::sqrt(2.0) * eps / static_cast<double>(cells_per_width);
    const auto cells = static_cast<std::size_t>(std::ceil(1.0 / dx));
    std::vector<double> profile(cells);
    for (std::size_t i = 0; i < cells; ++i) {
      const double x = -0.5 + (static_cast<double>(i) + 0.5) * dx;
      profile[i] = std::tanh(x / (std::sqrt(2.0) * eps));
    }
    out.push_back({eps, modica_mortola_energy(profile, dx, eps)});
  }
  return out;
}

}  // namespace geoinv
