#include "geoinv/core/map_inversion.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <random>

#include "geoinv/core/error.hpp"
#include "geoinv/core/parallel.hpp"
#include "geoinv/core/random.hpp"
#include "geoinv/core/sampler.hpp"

namespace geoinv {

namespace {

void check_problem(std::span<const double> m, const MapProblem& prob) {
  const std::size_t n = prob.grid.size();
  if (prob.op.cols() != 2 * n) fail(ErrorCode::DimensionMismatch, "operator columns must equal 2N");
  if (prob.op.rows() != prob.y.size() || prob.sigma.size() != prob.y.size()) {
    fail(ErrorCode::DimensionMismatch, "observation, sigma and operator rows differ");
  }
  if (m.size() != 2 * n) fail(ErrorCode::DimensionMismatch, "model length must equal 2N");
}

GLParams weighted(const MapConfig& cfg) {
  GLParams p = cfg.gl;
  p.lambda_gl = cfg.lambda_gl;
  return p;
}

void project(std::span<double> m, std::size_t n) {
  for (std::size_t i = n; i < 2 * n; ++i) m[i] = std::max(m[i], 0.0);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Norm of P(m - g) - m, the first-order stationarity measure under chi >= 0.
double projected_grad_norm(std::span<const double> m, std::span<const double> g, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    double d = -g[i];
    if (i >= n) d = std::max(m[i] - g[i], 0.0) - m[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

void MapConfig::validate() const {
  if (!(lambda_gl >= 0.0) || !std::isfinite(lambda_gl)) fail(ErrorCode::Config, "lambda_gl must be >= 0");
  if (!(lambda_tik >= 0.0) || !std::isfinite(lambda_tik)) {
    fail(ErrorCode::Config, "lambda_tik must be >= 0");
  }
  if (!(grad_tol > 0.0)) fail(ErrorCode::Config, "grad_tol must be > 0");
  if (!(shrink > 0.0 && shrink < 1.0)) fail(ErrorCode::Config, "shrink must lie in (0, 1)");
  if (!(sufficient_decrease > 0.0 && sufficient_decrease < 1.0)) {
    fail(ErrorCode::Config, "sufficient_decrease must lie in (0, 1)");
  }
  if (restarts < 1) fail(ErrorCode::Config, "restarts must be >= 1");
  if (!(rho_init_scale > 0.0)) fail(ErrorCode::Config, "rho_init_scale must be > 0");
  if (init == MapInit::Supplied && supplied.empty()) {
    fail(ErrorCode::Config, "supplied init requires a starting model");
  }
  gl.validate();
}

MapInit map_init_from_string(const std::string& s) {
  if (s == "zeros") return MapInit::Zeros;
  if (s == "random") return MapInit::Random;
  if (s == "supplied") return MapInit::Supplied;
  fail(ErrorCode::Config, "unknown init mode '" + s + "'");
}

std::string to_string(MapInit init) {
  switch (init) {
    case MapInit::Zeros: return "zeros";
    case MapInit::Random: return "random";
    case MapInit::Supplied: return "supplied";
  }
  return "zeros";
}

double total_energy(std::span<const double> m, const MapProblem& prob, const MapConfig& cfg) {
  check_problem(m, prob);
  const std::size_t n = prob.grid.size();
  double e = neg_log_likelihood(prob.op, m, prob.y, prob.sigma);
  if (cfg.lambda_gl > 0.0) {
    const std::vector<double> phi = chi_to_phi(m.subspan(n, n), prob.bounds);
    e += cfg.lambda_gl * gl_energy(prob.grid, phi, cfg.gl);
  }
  if (cfg.lambda_tik > 0.0) e += 0.5 * cfg.lambda_tik * dot(m, m);
  return e;
}

std::vector<double> total_gradient(std::span<const double> m, const MapProblem& prob,
                                   const MapConfig& cfg) {
  check_problem(m, prob);
  const std::size_t n = prob.grid.size();
  std::vector<double> g = misfit_gradient(prob.op, m, prob.y, prob.sigma);
  if (cfg.lambda_gl > 0.0) {
    const std::vector<double> s = gl_prior_score_chi(prob.grid, m.subspan(n, n), prob.bounds,
                                                     weighted(cfg));
    for (std::size_t i = 0; i < n; ++i) g[n + i] -= s[i];
  }
  if (cfg.lambda_tik > 0.0) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += cfg.lambda_tik * m[i];
  }
  return g;
}

std::vector<double> map_curvature_diagonal(const MapProblem& prob, const MapConfig& cfg) {
  const std::size_t n = prob.grid.size();
  std::vector<double> w(prob.sigma.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 / (prob.sigma[i] * prob.sigma[i]);
  std::vector<double> c = prob.op.weighted_column_sq_norms(w);
  if (c.size() != 2 * n) fail(ErrorCode::DimensionMismatch, "operator columns must equal 2N");
  for (double& v : c) v += cfg.lambda_tik;
  if (cfg.lambda_gl > 0.0) {
    const GraphLaplacian lap(prob.grid);
    const double h2 = prob.grid.h() * prob.grid.h();
    const double dphi = 2.0 / (prob.bounds.chi_max - prob.bounds.chi_min);
    const double scale = cfg.lambda_gl * dphi * dphi * prob.grid.cell_volume();
    for (std::size_t i = 0; i < n; ++i) {
      const double deg = static_cast<double>(lap.neighbour_count(i));
      c[n + i] += scale * (cfg.gl.kappa * deg / h2 + 2.0 / (cfg.gl.eps * cfg.gl.eps));
    }
  }
  const double top = *std::max_element(c.begin(), c.end());
  if (!(top > 0.0) || !std::isfinite(top)) return std::vector<double>(c.size(), 1.0);
  for (double& v : c) v = std::max(v, 1e-12 * top);
  return c;
}

MapRun descend(const MapProblem& prob, const MapConfig& cfg, std::vector<double> m0) {
  const std::size_t n = prob.grid.size();
  check_problem(m0, prob);
  project(m0, n);
  const std::vector<double> curv =
      cfg.precondition ? map_curvature_diagonal(prob, cfg) : std::vector<double>(2 * n, 1.0);

  MapRun run;
  run.m = std::move(m0);
  double e = total_energy(run.m, prob, cfg);
  std::vector<double> g = total_gradient(run.m, prob, cfg);
  if (!std::isfinite(e)) {
    run.aborted = true;
    run.abort_reason = "non-finite energy at the initial model";
    run.energy = e;
    return run;
  }
  double gnorm = projected_grad_norm(run.m, g, n);
  run.trace.push_back({0, e, gnorm, 0.0, 0});

  const double gn0 = std::sqrt(dot(g, g));
  double alpha = cfg.precondition ? 1.0 : (gn0 > 0.0 ? 1.0 / gn0 : 1.0);
  std::vector<double> trial(run.m.size());
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    if (gnorm <= cfg.grad_tol) {
      run.converged = true;
      break;
    }
    bool accepted = false;
    std::size_t bt = 0;
    double e_new = e;
    for (; bt <= cfg.max_backtracks; ++bt) {
      for (std::size_t i = 0; i < trial.size(); ++i) trial[i] = run.m[i] - alpha * g[i] / curv[i];
      project(trial, n);
      double decrease = 0.0;
      for (std::size_t i = 0; i < trial.size(); ++i) decrease += g[i] * (trial[i] - run.m[i]);
      e_new = total_energy(trial, prob, cfg);
      if (std::isnan(e_new)) {
        run.aborted = true;
        run.abort_reason = "NaN energy during line search at iteration " + std::to_string(it);
        run.energy = e;
        return run;
      }
      if (e_new <= e + cfg.sufficient_decrease * decrease && e_new <= e) {
        accepted = true;
        break;
      }
      alpha *= cfg.shrink;
    }
    if (!accepted) break;  // step underflow: no further descent attainable

    std::vector<double> g_new = total_gradient(trial, prob, cfg);
    double ss = 0.0;
    double sy = 0.0;
    for (std::size_t i = 0; i < trial.size(); ++i) {
      const double s = trial[i] - run.m[i];
      ss += s * s * curv[i];
      sy += s * (g_new[i] - g[i]);
    }
    const double step = alpha;
    run.m.swap(trial);
    g.swap(g_new);
    e = e_new;
    gnorm = projected_grad_norm(run.m, g, n);
    run.trace.push_back({it, e, gnorm, step, bt});
    if (sy > 0.0 && std::isfinite(ss / sy)) alpha = ss / sy;
    if (ss == 0.0) {
      run.converged = gnorm <= cfg.grad_tol;
      break;
    }
  }
  if (gnorm <= cfg.grad_tol) run.converged = true;
  run.energy = e;
  return run;
}

std::vector<double> initial_model(const MapProblem& prob, const MapConfig& cfg,
                                  std::size_t restart) {
  const std::size_t n = prob.grid.size();
  std::vector<double> m(2 * n, 0.0);
  const MapInit mode = restart == 0 ? cfg.init : MapInit::Random;
  switch (mode) {
    case MapInit::Zeros:
      std::fill(m.begin() + static_cast<std::ptrdiff_t>(n), m.end(), prob.bounds.midpoint());
      break;
    case MapInit::Random: {
      NormalSource src(chain_seed(cfg.seed, restart));
      std::uniform_real_distribution<double> u(prob.bounds.chi_min, prob.bounds.chi_max);
      for (std::size_t i = 0; i < n; ++i) m[i] = cfg.rho_init_scale * src();
      for (std::size_t i = n; i < 2 * n; ++i) m[i] = u(src.engine());
      break;
    }
    case MapInit::Supplied:
      if (cfg.supplied.size() != 2 * n) {
        fail(ErrorCode::DimensionMismatch, "supplied starting model must have length 2N");
      }
      m = cfg.supplied;
      break;
  }
  return m;
}

MapResult invert_map(const MapProblem& prob, const MapConfig& cfg) {
  cfg.validate();
  prob.bounds.validate();
  const std::size_t n = prob.grid.size();
  std::vector<MapRun> runs(cfg.restarts);
  std::exception_ptr first;
  const long long nr = static_cast<long long>(cfg.restarts);
#pragma omp parallel for schedule(dynamic) num_threads(thread_count())
  for (long long r = 0; r < nr; ++r) {
    try {
      const auto idx = static_cast<std::size_t>(r);
      runs[idx] = descend(prob, cfg, initial_model(prob, cfg, idx));
    } catch (...) {
#pragma omp critical(geoinv_map_error)
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);

  std::size_t best = runs.size();
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (runs[r].aborted || !std::isfinite(runs[r].energy)) continue;
    if (best == runs.size() || runs[r].energy < runs[best].energy) best = r;
  }
  if (best == runs.size()) {
    fail(ErrorCode::Numeric, "every MAP restart aborted: " + runs.front().abort_reason);
  }
  const std::vector<double>& m = runs[best].m;
  JointModel model(
      PropertyVolume(prob.grid, PropertyKind::Density, {m.begin(), m.begin() + static_cast<std::ptrdiff_t>(n)}),
      PropertyVolume(prob.grid, PropertyKind::Susceptibility,
                     {m.begin() + static_cast<std::ptrdiff_t>(n), m.end()}));
  return MapResult{std::move(model), std::move(runs), best};
}

MapResult invert_map(const FieldData& data, const JointOperator& op, const VoxelGrid& grid,
                     const ChiBounds& bounds, const MapConfig& cfg) {
  data.validate();
  const std::vector<double> y = data.stacked();
  const std::vector<double> sigma = data.noise.stacked();
  const MapProblem prob{op, y, sigma, grid, bounds};
  return invert_map(prob, cfg);
}

}  // namespace geoinv
