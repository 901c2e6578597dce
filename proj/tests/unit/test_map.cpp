#include <cmath>
#include <random>

#include "doctest.h"
#include "geoinv/core/map_inversion.hpp"
#include "geoinv/core/scenario.hpp"
#include "oracles.hpp"

using namespace geoinv;

namespace {

// Well-conditioned random operator on a 2x2x2 grid (16 unknowns, 48 rows).
struct RandomProblem {
  VoxelGrid grid{2, 2, 2, 1.0};
  std::vector<double> A;
  SensitivityOperator op = SensitivityOperator::from_matrix(1, 1, {1.0});
  std::vector<double> truth;
  std::vector<double> y;
  std::vector<double> sigma;
  ChiBounds bounds{0.0, 1.0};

  explicit RandomProblem(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 2 * grid.size(), m = 3 * n;
    A = oracle::randn(m * n, rng);
    op = SensitivityOperator::from_matrix(m, n, A);
    truth = oracle::randn(n, rng);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    for (std::size_t i = grid.size(); i < n; ++i) truth[i] = u(rng);
    y = op.apply(truth);
    sigma.assign(m, 1.0);
  }

  MapProblem problem() const { return {op, y, sigma, grid, bounds}; }
};

}  // namespace

TEST_SUITE("map") {
  TEST_CASE("config validation and init names") {
    MapConfig c;
    CHECK_NOTHROW(c.validate());
    c.shrink = 1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.lambda_gl = -1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.init = MapInit::Supplied;
    CHECK_THROWS_AS(c.validate(), Error);
    CHECK(map_init_from_string("random") == MapInit::Random);
    CHECK(to_string(MapInit::Zeros) == "zeros");
    CHECK_THROWS_AS((void)map_init_from_string("ones"), Error);
  }

  TEST_CASE("energy reduces to the likelihood when regularisation is off") {
    RandomProblem rp(1);
    auto y = rp.y;
    y[0] += 0.5;
    const MapProblem prob{rp.op, y, rp.sigma, rp.grid, rp.bounds};
    MapConfig cfg;
    std::mt19937_64 rng(2);
    const auto m = oracle::randn(rp.truth.size(), rng);
    CHECK(total_energy(m, prob, cfg) == neg_log_likelihood(rp.op, m, y, rp.sigma));
    CHECK(total_gradient(m, prob, cfg) == misfit_gradient(rp.op, m, y, rp.sigma));
  }

  TEST_CASE("energy and gradient by finite differences on a 3^3 physical problem") {
    const VoxelGrid g(3, 3, 3, 1.0);
    const auto survey = regular_survey(g, 4, 4, 2.0);
    const auto op = assemble_joint_operator(g, survey, {}, {});
    std::mt19937_64 rng(3);
    auto m = oracle::randn(2 * g.size(), rng);
    for (std::size_t i = 0; i < g.size(); ++i) m[i] *= 1e4;
    for (std::size_t i = g.size(); i < m.size(); ++i) m[i] = 0.05 + 0.04 * m[i];
    auto y = op.apply(m);
    for (double& v : y) v *= 1.1;
    std::vector<double> sigma(op.rows(), 1.0);
    const ChiBounds b{0.0, 0.1};
    const MapProblem prob{op, y, sigma, g, b};
    MapConfig cfg;
    cfg.lambda_gl = 0.3;
    cfg.lambda_tik = 1e-3;
    cfg.gl.kappa = 0.8;
    cfg.gl.eps = 0.6;
    const auto grad = total_gradient(m, prob, cfg);
    double worst = 0.0, top = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double scale = i < g.size() ? 1e4 : 0.1;
      const double h = 1e-6 * scale;
      auto mp = m, mm = m;
      mp[i] += h;
      mm[i] -= h;
      const double fd = (total_energy(mp, prob, cfg) - total_energy(mm, prob, cfg)) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[i]) * scale);
      top = std::max(top, std::abs(grad[i]) * scale);
    }
    CHECK(worst / top < 1e-6);

    // at the noiseless truth with no regularisation the gradient vanishes
    const auto clean = op.apply(m);
    const MapProblem exact{op, clean, sigma, g, b};
    for (double v : total_gradient(m, exact, MapConfig{})) CHECK(v == 0.0);
  }

  TEST_CASE("noiseless overdetermined recovery") {
    RandomProblem rp(4);
    MapConfig cfg;
    cfg.max_iters = 5000;
    cfg.grad_tol = 1e-12;
    const auto res = invert_map(rp.problem(), cfg);
    const auto m = stack(res.model);
    const std::size_t n = rp.truth.size();
    const auto ls = oracle::least_squares(rp.A, 3 * n, n, rp.y);
    CHECK(oracle::rel_l2(m, rp.truth) < 1e-4);
    CHECK(oracle::rel_l2(m, ls) < 1e-4);
    CHECK(res.runs[res.best].converged);
  }

  TEST_CASE("accepted steps never increase the energy") {
    RandomProblem rp(5);
    auto y = rp.y;
    std::mt19937_64 rng(6);
    const auto noise = oracle::randn(y.size(), rng, 0.3);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += noise[i];
    const MapProblem prob{rp.op, y, rp.sigma, rp.grid, rp.bounds};
    for (bool pre : {true, false}) {
      MapConfig cfg;
      cfg.lambda_gl = 0.5;
      cfg.precondition = pre;
      cfg.max_iters = 300;
      const auto res = invert_map(prob, cfg);
      const auto& tr = res.runs[0].trace;
      REQUIRE(tr.size() > 2);
      for (std::size_t k = 1; k < tr.size(); ++k) CHECK(tr[k].energy <= tr[k - 1].energy);
      for (std::size_t i = rp.grid.size(); i < 2 * rp.grid.size(); ++i)
        CHECK(stack(res.model)[i] >= 0.0);
    }
  }

  TEST_CASE("deterministic given the init") {
    RandomProblem rp(7);
    MapConfig cfg;
    cfg.lambda_gl = 0.2;
    cfg.max_iters = 50;
    cfg.restarts = 3;
    cfg.seed = 4;
    const auto a = invert_map(rp.problem(), cfg);
    const auto b = invert_map(rp.problem(), cfg);
    CHECK(a.model == b.model);
    for (std::size_t r = 0; r < 3; ++r) CHECK(a.runs[r].m == b.runs[r].m);
  }

  TEST_CASE("strictly convex objective: restarts agree") {
    RandomProblem rp(8);
    auto y = rp.y;
    std::mt19937_64 rng(3);
    const auto noise = oracle::randn(y.size(), rng, 0.5);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += noise[i];
    const MapProblem prob{rp.op, y, rp.sigma, rp.grid, rp.bounds};
    MapConfig cfg;
    cfg.lambda_tik = 1e-2;
    cfg.restarts = 4;
    cfg.rho_init_scale = 3.0;
    cfg.max_iters = 20000;
    cfg.grad_tol = 1e-7;
    const auto res = invert_map(prob, cfg);
    REQUIRE(res.runs.size() == 4);
    for (const auto& run : res.runs) {
      CHECK(run.converged);
      CHECK(oracle::rel_l2(run.m, res.runs[0].m) < 1e-6);
    }
    CHECK(res.runs[1].trace.front().energy != res.runs[2].trace.front().energy);
  }

  TEST_CASE("NaN energy aborts with a trace") {
    RandomProblem rp(9);
    auto y = rp.y;
    y[2] = NAN;
    const MapProblem prob{rp.op, y, rp.sigma, rp.grid, rp.bounds};
    const auto run = descend(prob, MapConfig{}, std::vector<double>(rp.truth.size(), 0.0));
    CHECK(run.aborted);
    CHECK_FALSE(run.abort_reason.empty());
    try {
      (void)invert_map(prob, MapConfig{});
      FAIL("expected a numeric error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Numeric);
    }
  }

  TEST_CASE("zeros init puts chi at the bounds midpoint") {
    RandomProblem rp(10);
    const auto m = initial_model(rp.problem(), MapConfig{}, 0);
    for (std::size_t i = 0; i < rp.grid.size(); ++i) CHECK(m[i] == 0.0);
    for (std::size_t i = rp.grid.size(); i < m.size(); ++i) CHECK(m[i] == rp.bounds.midpoint());
  }

  TEST_CASE("GL term does not grow along a lambda sweep") {
    ScenarioSpec spec;
    spec.grid = VoxelGrid(6, 6, 4, 1.0);
    spec.bounds = {0.0, 0.1};
    Body b;
    b.lo = {2, 2, 1};
    b.hi = {4, 4, 3};
    b.rho = 300.0;
    b.chi = 0.1;
    spec.bodies = {b};
    spec.survey_nx = spec.survey_ny = 8;
    spec.snr = 20.0;
    const auto sc = generate_scenario(spec, 1);
    const auto op = assemble_joint_operator(spec.grid, sc.data.survey, spec.gravity, spec.magnetic);
    const auto y = sc.data.stacked();
    const auto sigma = sc.data.noise.stacked();
    const MapProblem prob{op, y, sigma, spec.grid, spec.bounds};
    double prev = INFINITY;
    for (double lam : {0.0, 1.0, 10.0, 100.0, 1000.0}) {
      MapConfig cfg;
      cfg.lambda_gl = lam;
      cfg.max_iters = 2000;
      const auto res = invert_map(prob, cfg);
      const auto phi = chi_to_phi(res.model.chi().values(), spec.bounds);
      const double e = gl_energy(spec.grid, phi, cfg.gl);
      CHECK(e <= prev * (1 + 1e-9));
      prev = e;
    }
  }
}
