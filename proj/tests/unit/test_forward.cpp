#include <cmath>
#include <memory>
#include <random>

#include "doctest.h"
#include "geoinv/core/forward.hpp"
#include "oracles.hpp"

using namespace geoinv;

namespace {

GravityKernelConfig si_gravity() {
  GravityKernelConfig c;
  c.unit = GravityUnit::SI;
  return c;
}

double dot_test_gap(const LinearOperator& op, std::mt19937_64& rng) {
  const auto v = oracle::randn(op.cols(), rng);
  const auto w = oracle::randn(op.rows(), rng);
  const double lhs = oracle::dot(op.apply(v), w);
  const double rhs = oracle::dot(v, op.adjoint(w));
  return std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs));
}

}  // namespace

TEST_SUITE("forward") {
  TEST_CASE("prism kernel matches quadrature") {
    const auto cfg = si_gravity();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
      const Vec3 lo{u(rng) * 10 - 5, u(rng) * 10 - 5, -5 - u(rng) * 5};
      const Vec3 hi{lo.x + 0.5 + 1.5 * u(rng), lo.y + 0.5 + 1.5 * u(rng), lo.z + 0.5 + 1.5 * u(rng)};
      const double ext = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
      const Vec3 obs{lo.x + (u(rng) - 0.5) * 4 * ext, lo.y + (u(rng) - 0.5) * 4 * ext,
                     hi.z + ext * (1.0 + 2.0 * u(rng))};
      const double k = prism_gravity_kernel({lo, hi}, obs, cfg);
      const double q = oracle::prism_gravity_quadrature({lo, hi}, obs, cfg.G);
      CHECK(std::abs(k - q) / std::abs(q) < 1e-6);
    }
  }

  TEST_CASE("prism kernel far field approaches a point mass") {
    const auto cfg = si_gravity();
    const Box b{{0, 0, 0}, {1, 1, 1}};
    for (double r : {20.0, 40.0, 100.0}) {
      const Vec3 obs{3.0, -2.0, 0.5 + r};
      const double dx = obs.x - 0.5, dy = obs.y - 0.5, dz = obs.z - 0.5;
      const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
      const double point = cfg.G * 1.0 * dz / (d * d * d);
      CHECK(std::abs(prism_gravity_kernel(b, obs, cfg) - point) / point < 5e-3);
    }
  }

  TEST_CASE("positive density below the station gives a positive anomaly in mGal") {
    const Box b{{0, 0, -2}, {1, 1, -1}};
    GravityKernelConfig mgal;
    const double si = prism_gravity_kernel(b, {0.5, 0.5, 1.0}, si_gravity());
    CHECK(si > 0.0);
    CHECK(prism_gravity_kernel(b, {0.5, 0.5, 1.0}, mgal) == doctest::Approx(si * 1e5));
  }

  TEST_CASE("prism kernel translation invariance") {
    const auto cfg = si_gravity();
    const Box b{{0.3, -1.2, -4.0}, {1.7, 0.1, -2.5}};
    const Vec3 o{2.0, 1.0, 1.0};
    const Vec3 s{123.0, -77.0, 15.0};
    const double a = prism_gravity_kernel(b, o, cfg);
    const double t = prism_gravity_kernel({{b.lo.x + s.x, b.lo.y + s.y, b.lo.z + s.z},
                                           {b.hi.x + s.x, b.hi.y + s.y, b.hi.z + s.z}},
                                          {o.x + s.x, o.y + s.y, o.z + s.z}, cfg);
    CHECK(std::abs(a - t) <= 1e-12 * std::abs(a));
  }

  TEST_CASE("prism kernel errors") {
    const auto cfg = si_gravity();
    const Box b{{0, 0, 0}, {1, 1, 1}};
    try {
      (void)prism_gravity_kernel(b, {0.5, 0.5, 1.0}, cfg);
      FAIL("expected singular geometry");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::SingularGeometry);
    }
    try {
      (void)prism_gravity_kernel({{0, 0, 0}, {1, 0, 1}}, {0.5, 0.5, 3.0}, cfg);
      FAIL("expected degenerate cell");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DegenerateCell);
    }
  }

  TEST_CASE("mirror-symmetric cells contribute equally") {
    const auto cfg = si_gravity();
    const Vec3 o{0.0, 0.0, 2.0};
    const double a = prism_gravity_kernel({{1, -0.5, -1}, {2, 0.5, 0}}, o, cfg);
    const double b = prism_gravity_kernel({{-2, -0.5, -1}, {-1, 0.5, 0}}, o, cfg);
    CHECK(a == doctest::Approx(b).epsilon(1e-13));
  }

  TEST_CASE("dipole kernel vertical field directly above") {
    MagneticKernelConfig cfg;
    cfg.inclination_deg = 90.0;
    cfg.B0 = 50000.0;
    const Box cell{{0, 0, 0}, {2, 2, 2}};
    const double r = 7.0;
    const double k = dipole_tmi_kernel(cell, {1, 1, 1 + r}, cfg);
    CHECK(k == doctest::Approx(2.0 * cfg.B0 * 8.0 / (4.0 * oracle::kPi * r * r * r)).epsilon(1e-14));
  }

  TEST_CASE("dipole kernel matches the sub-dipole refinement") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 6; ++trial) {
      MagneticKernelConfig cfg;
      cfg.inclination_deg = 90.0 * u(rng);
      cfg.declination_deg = 180.0 * u(rng);
      const Box cell{{0, 0, 0}, {1, 1, 1}};
      const double r = 4.0 + 2.0 * (u(rng) + 1.0);
      const double th = 0.6 * u(rng), ph = oracle::kPi * u(rng);
      const Vec3 obs{0.5 + r * std::sin(th) * std::cos(ph), 0.5 + r * std::sin(th) * std::sin(ph),
                     0.5 + r * std::cos(th)};
      const double k = dipole_tmi_kernel(cell, obs, cfg);
      const double ref =
          oracle::subdipole_tmi(cell, obs, cfg.B0, cfg.inclination_deg, cfg.declination_deg);
      CHECK(std::abs(k - ref) / std::abs(ref) < 0.01);
    }
  }

  TEST_CASE("dipole kernel near-field error") {
    MagneticKernelConfig cfg;
    try {
      (void)dipole_tmi_kernel({{0, 0, 0}, {1, 1, 1}}, {0.5, 0.5, 0.8}, cfg);
      FAIL("expected near-field error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NearField);
    }
  }

  TEST_CASE("field direction is a unit vector with z up") {
    MagneticKernelConfig cfg;
    cfg.inclination_deg = 60.0;
    cfg.declination_deg = -35.0;
    const Vec3 d = cfg.direction();
    CHECK(std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(d.z < 0.0);
    cfg.inclination_deg = 91.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
  }

  TEST_CASE("assembled gravity operator matches per-cell quadrature") {
    const VoxelGrid g(4, 4, 4, 1.0);
    const auto s = regular_survey(g, 3, 3, 1.0);
    const auto cfg = si_gravity();
    const auto op = assemble_gravity_operator(g, s, cfg, EvalMode::Dense);
    std::mt19937_64 rng(2);
    const auto rho = oracle::randn(g.size(), rng, 300.0);
    const auto y = op.apply(rho);
    std::vector<double> ref(s.size(), 0.0);
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = 0; j < g.size(); ++j)
        ref[i] += oracle::prism_gravity_quadrature(g.cell_box(j), s[i], cfg.G, 2, 12) * rho[j];
    for (std::size_t i = 0; i < s.size(); ++i)
      CHECK(std::abs(y[i] - ref[i]) <= 1e-6 * oracle::norm2(ref));
  }

  TEST_CASE("dense and matrix-free apply agree") {
    const VoxelGrid g(4, 3, 3, 1.0);
    const auto s = regular_survey(g, 4, 4, 2.0);
    const auto d = assemble_joint_operator(g, s, {}, {}, EvalMode::Dense);
    const auto f = assemble_joint_operator(g, s, {}, {}, EvalMode::MatrixFree);
    CHECK(d.gravity().mode() == EvalMode::Dense);
    CHECK(f.gravity().mode() == EvalMode::MatrixFree);
    std::mt19937_64 rng(8);
    const auto m = oracle::randn(d.cols(), rng);
    const auto w = oracle::randn(d.rows(), rng);
    CHECK(oracle::rel_max(f.apply(m), d.apply(m)) <= 1e-12);
    CHECK(oracle::rel_max(f.adjoint(w), d.adjoint(w)) <= 1e-12);
  }

  TEST_CASE("zero models give zero data") {
    const VoxelGrid g(3, 3, 2, 1.0);
    const auto s = regular_survey(g, 3, 3, 2.0);
    const auto op = assemble_joint_operator(g, s, {}, {});
    for (double v : op.apply(std::vector<double>(op.cols(), 0.0))) CHECK(v == 0.0);
  }

  TEST_CASE("adjoint dot tests for every operator and mode") {
    const VoxelGrid g(4, 4, 3, 1.0);
    const auto s = regular_survey(g, 5, 5, 2.0);
    std::mt19937_64 rng(21);
    for (auto mode : {EvalMode::Dense, EvalMode::MatrixFree}) {
      const auto op = assemble_joint_operator(g, s, {}, {}, mode);
      for (int i = 0; i < 5; ++i) {
        CHECK(dot_test_gap(op.gravity(), rng) < 1e-10);
        CHECK(dot_test_gap(op.magnetic(), rng) < 1e-10);
        CHECK(dot_test_gap(op, rng) < 1e-10);
      }
    }
  }

  TEST_CASE("magnetic operator periodic in declination and linear in B0") {
    const VoxelGrid g(3, 3, 2, 1.0);
    const auto s = regular_survey(g, 3, 3, 2.0);
    MagneticKernelConfig a;
    a.inclination_deg = 45.0;
    a.declination_deg = -180.0;
    MagneticKernelConfig b = a;
    b.declination_deg = 180.0;
    MagneticKernelConfig c = a;
    c.B0 = 2.0 * a.B0;
    const auto oa = assemble_magnetic_operator(g, s, a, EvalMode::Dense);
    const auto ob = assemble_magnetic_operator(g, s, b, EvalMode::Dense);
    const auto oc = assemble_magnetic_operator(g, s, c, EvalMode::Dense);
    double scale = 0.0;
    for (std::size_t i = 0; i < oa.rows(); ++i)
      for (std::size_t j = 0; j < oa.cols(); ++j) scale = std::max(scale, std::abs(oa.entry(i, j)));
    for (std::size_t i = 0; i < oa.rows(); ++i)
      for (std::size_t j = 0; j < oa.cols(); ++j) {
        CHECK(std::abs(ob.entry(i, j) - oa.entry(i, j)) <= 1e-12 * scale);
        CHECK(oc.entry(i, j) == 2.0 * oa.entry(i, j));
      }
  }

  TEST_CASE("magnetic assembly rejects stations too close to the top cells") {
    const VoxelGrid g(2, 2, 2, 1.0);
    const SurveyGeometry s({{1.0, 1.0, 2.2}});
    CHECK_THROWS_AS((void)assemble_magnetic_operator(g, s, {}), Error);
  }

  TEST_CASE("joint operator block structure and toy example") {
    const VoxelGrid g(1, 1, 1, 1.0);
    auto grho = std::make_shared<SensitivityOperator>(SensitivityOperator::from_matrix(1, 1, {2.0}, g));
    auto gchi = std::make_shared<SensitivityOperator>(SensitivityOperator::from_matrix(1, 1, {3.0}, g));
    const JointOperator op(grho, gchi);
    CHECK(op.apply(std::vector<double>{5.0, 7.0}) == std::vector<double>{10.0, 21.0});
    CHECK(op.adjoint(std::vector<double>{1.0, 1.0}) == std::vector<double>{2.0, 3.0});

    const VoxelGrid g2(3, 3, 2, 1.0);
    const auto s = regular_survey(g2, 4, 4, 2.0);
    const auto j = assemble_joint_operator(g2, s, {}, {});
    std::mt19937_64 rng(4);
    auto m = oracle::randn(j.cols(), rng);
    std::fill(m.begin() + static_cast<long>(g2.size()), m.end(), 0.0);
    const auto y = j.apply(m);
    const auto yg = j.gravity().apply(std::span<const double>(m).first(g2.size()));
    for (std::size_t i = 0; i < yg.size(); ++i) CHECK(y[i] == yg[i]);
    for (std::size_t i = yg.size(); i < y.size(); ++i) CHECK(y[i] == 0.0);
  }

  TEST_CASE("joint operator rejects mismatched grids") {
    auto a = std::make_shared<SensitivityOperator>(
        SensitivityOperator::from_matrix(1, 1, {1.0}, VoxelGrid(1, 1, 1, 1.0)));
    auto b = std::make_shared<SensitivityOperator>(
        SensitivityOperator::from_matrix(1, 1, {1.0}, VoxelGrid(1, 1, 1, 2.0)));
    CHECK_THROWS_AS(JointOperator(a, b), Error);
  }

  TEST_CASE("superposition") {
    const VoxelGrid g(3, 3, 3, 1.0);
    const auto s = regular_survey(g, 4, 4, 2.0);
    const auto op = assemble_joint_operator(g, s, {}, {});
    std::mt19937_64 rng(17);
    const auto a = oracle::randn(op.cols(), rng), b = oracle::randn(op.cols(), rng);
    std::vector<double> ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) ab[i] = 2.5 * a[i] - 1.5 * b[i];
    const auto ya = op.apply(a), yb = op.apply(b), yab = op.apply(ab);
    std::vector<double> sum(ya.size());
    for (std::size_t i = 0; i < ya.size(); ++i) sum[i] = 2.5 * ya[i] - 1.5 * yb[i];
    CHECK(oracle::rel_max(yab, sum) <= 1e-12);
  }

  TEST_CASE("far-field decay rates along a vertical line") {
    const VoxelGrid g(2, 2, 2, 1.0);
    const std::vector<double> ones(g.size(), 1.0);
    MagneticKernelConfig mcfg;
    mcfg.inclination_deg = 90.0;
    for (double r : {40.0, 80.0}) {
      const SurveyGeometry near({{1.0, 1.0, 1.0 + r}}), far({{1.0, 1.0, 1.0 + 2 * r}});
      const double gn = assemble_gravity_operator(g, near, {}).apply(ones)[0];
      const double gf = assemble_gravity_operator(g, far, {}).apply(ones)[0];
      CHECK(std::abs(gn / gf - 4.0) / 4.0 < 0.01);
      const double mn = assemble_magnetic_operator(g, near, mcfg).apply(ones)[0];
      const double mf = assemble_magnetic_operator(g, far, mcfg).apply(ones)[0];
      CHECK(std::abs(mn / mf - 8.0) / 8.0 < 0.01);
    }
  }

  TEST_CASE("simulate is seed deterministic and exact without noise") {
    const VoxelGrid g(3, 3, 2, 1.0);
    const auto s = regular_survey(g, 3, 3, 2.0);
    const auto op = assemble_joint_operator(g, s, {}, {});
    std::mt19937_64 rng(3);
    const auto m = oracle::randn(op.cols(), rng);
    const std::vector<double> sigma(op.rows(), 0.25);
    CHECK(simulate(op, m, sigma, 7) == simulate(op, m, sigma, 7));
    CHECK(simulate(op, m, sigma, 7) != simulate(op, m, sigma, 8));
    const std::vector<double> tiny(op.rows(), 1e-300);
    const auto y = simulate(op, m, tiny, 1);
    const auto gm = op.apply(m);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == gm[i]);
  }

  TEST_CASE("simulated noise has the requested standard deviation") {
    auto id = SensitivityOperator::from_matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
    const std::vector<double> m{3.0, -1.0};
    const std::vector<double> sigma{0.5, 2.0};
    std::vector<double> ss(2, 0.0);
    const int n = 10000;
    for (int k = 0; k < n; ++k) {
      const auto y = simulate(id, m, sigma, 1000 + k);
      for (int i = 0; i < 2; ++i) ss[i] += (y[i] - m[i]) * (y[i] - m[i]);
    }
    for (int i = 0; i < 2; ++i) CHECK(std::abs(std::sqrt(ss[i] / n) / sigma[i] - 1.0) < 0.03);
  }

  TEST_CASE("likelihood zero at the data, gradient by finite differences, sigma scaling") {
    const VoxelGrid g(3, 3, 3, 1.0);
    const auto s = regular_survey(g, 4, 4, 2.0);
    const auto op = assemble_joint_operator(g, s, {}, {});
    std::mt19937_64 rng(12);
    auto m = oracle::randn(op.cols(), rng);
    for (std::size_t i = 0; i < g.size(); ++i) m[i] *= 100.0;
    const auto y0 = op.apply(m);
    std::vector<double> sigma(op.rows());
    for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] = i < s.size() ? 0.05 : 2.0;
    CHECK(neg_log_likelihood(op, m, y0, sigma) == 0.0);
    for (double v : misfit_gradient(op, m, y0, sigma)) CHECK(v == 0.0);

    auto y = y0;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += sigma[i] * oracle::randn(1, rng)[0];
    const auto grad = misfit_gradient(op, m, y, sigma);
    std::vector<double> scale(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) scale[i] = i < g.size() ? 100.0 : 1.0;
    // per-coordinate step 1e-6 * scale, comparing in the same units
    double worst = 0.0, gmax = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      auto mp = m, mm = m;
      const double h = 1e-6 * scale[i];
      mp[i] += h;
      mm[i] -= h;
      const double fd = (neg_log_likelihood(op, mp, y, sigma) - neg_log_likelihood(op, mm, y, sigma)) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[i]) * scale[i]);
      gmax = std::max(gmax, std::abs(grad[i]) * scale[i]);
    }
    CHECK(worst / gmax < 1e-6);

    auto sigma2 = sigma;
    for (double& v : sigma2) v *= 3.0;
    CHECK(neg_log_likelihood(op, m, y, sigma2) ==
          doctest::Approx(neg_log_likelihood(op, m, y, sigma) / 9.0).epsilon(1e-13));
    CHECK_THROWS_AS((void)neg_log_likelihood(op, m, std::vector<double>(3, 0.0), sigma), Error);
  }

  TEST_CASE("noise model validation") {
    CHECK_THROWS_AS(NoiseModel::broadcast(2, 0.0, 2, 1.0).validate(), Error);
    const auto nm = NoiseModel::broadcast(2, 0.1, 3, 15.0);
    CHECK(nm.stacked() == std::vector<double>{0.1, 0.1, 15.0, 15.0, 15.0});
  }

  TEST_CASE("auto mode switches to matrix-free for large problems") {
    CHECK(resolve_mode(EvalMode::Auto, 100, 1000) == EvalMode::Dense);
    CHECK(resolve_mode(EvalMode::Auto, 100, 40 * 40 * 40) == EvalMode::MatrixFree);
    CHECK(resolve_mode(EvalMode::Auto, 70 * 70, 1000) == EvalMode::MatrixFree);
    CHECK(resolve_mode(EvalMode::Dense, 70 * 70, 40 * 40 * 40) == EvalMode::Dense);
  }
}
