#include <cmath>
#include <memory>
#include <random>

#include "doctest.h"
#include "geoinv/core/random.hpp"
#include "geoinv/core/sampler.hpp"
#include "oracles.hpp"

using namespace geoinv;

namespace {

struct LinearToy {
  std::size_t n = 8;  // latent and model size
  std::size_t m = 6;  // observations
  std::vector<double> W;  // decoder n x n
  std::vector<double> A;  // operator m x n
  std::vector<double> y;
  std::vector<double> sigma;
};

LinearToy make_toy(std::uint64_t seed) {
  LinearToy t;
  std::mt19937_64 rng(seed);
  t.W = oracle::randn(t.n * t.n, rng, 0.5);
  for (std::size_t i = 0; i < t.n; ++i) t.W[i * t.n + i] += 1.0;
  t.A = oracle::randn(t.m * t.n, rng);
  t.y = oracle::randn(t.m, rng);
  t.sigma.resize(t.m);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (double& s : t.sigma) s = u(rng);
  return t;
}

// Row-major product a (r x k) times b (k x c).
std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                           std::size_t r, std::size_t k, std::size_t c) {
  std::vector<double> out(r * c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t l = 0; l < k; ++l)
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] += a[i * k + l] * b[l * c + j];
  return out;
}

std::vector<double> transpose(const std::vector<double>& a, std::size_t r, std::size_t c) {
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  return out;
}

}  // namespace

TEST_SUITE("sampler") {
  TEST_CASE("decoder adjoints: dot test and finite-difference JVP") {
    std::mt19937_64 rng(1);
    const LinearDecoder lin(5, 3, oracle::randn(15, rng), oracle::randn(5, rng), {0, 0});
    const DiagonalAffineDecoder diag(oracle::randn(4, rng), oracle::randn(4, rng), {2, 2});
    const IdentityDecoder id(4, {0, 4});
    for (const Decoder* d : std::initializer_list<const Decoder*>{&lin, &diag, &id}) {
      const auto z = oracle::randn(d->latent_dim(), rng);
      const auto u = oracle::randn(d->latent_dim(), rng);
      const auto g = oracle::randn(d->output_dim(), rng);
      // <J u, g> against <u, J^T g>
      const auto jtg = d->adjoint_jacobian_apply(z, g);
      const double delta = 1e-6;
      auto zp = z, zm = z;
      for (std::size_t i = 0; i < z.size(); ++i) {
        zp[i] += delta * u[i];
        zm[i] -= delta * u[i];
      }
      const auto xp = d->apply(zp), xm = d->apply(zm);
      double jvp_dot = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) jvp_dot += (xp[i] - xm[i]) / (2 * delta) * g[i];
      CHECK(std::abs(jvp_dot - oracle::dot(u, jtg)) <= 1e-7 * std::max(1.0, std::abs(jvp_dot)));
    }
    // exact dot test on the linear decoder
    const auto u = oracle::randn(3, rng), g = oracle::randn(5, rng);
    const auto zero = std::vector<double>(3, 0.0);
    const auto x0 = lin.apply(zero), xu = lin.apply(u);
    double lhs = 0.0;
    for (std::size_t i = 0; i < 5; ++i) lhs += (xu[i] - x0[i]) * g[i];
    CHECK(std::abs(lhs - oracle::dot(u, lin.adjoint_jacobian_apply(zero, g))) <= 1e-12 * std::abs(lhs));
  }

  TEST_CASE("schedules clamp to the unit interval") {
    const auto g = Schedule::from_name("one_minus_t", 1.0);
    CHECK(g(1.0) == 0.0);
    CHECK(g(0.0) == 1.0);
    CHECK(g(-3.0) == 1.0);
    const auto e = Schedule::from_name("linear_t", 0.3);
    CHECK(e(1.0) == doctest::Approx(0.3));
    CHECK(e(0.0) == 0.0);
    CHECK(Schedule::from_name("constant", 7.0)(0.5) == 1.0);
    CHECK(Schedule::from_name("constant", -1.0)(0.5) == 0.0);
    CHECK(Schedule{Schedule::Kind::Constant, NAN}(0.5) == 0.0);
    CHECK_THROWS_AS((void)Schedule::from_name("cosine", 1.0), Error);
  }

  TEST_CASE("sampler config defaults and validation") {
    SamplerConfig c;
    CHECK(c.n_steps == 64);
    CHECK(c.k_ref == 8);
    CHECK(c.alpha_ref == 0.1);
    CHECK(c.sigma_mag == 15.0);
    CHECK(c.sigma_grav == 0.1);
    CHECK(c.clamp_norm == 100.0);
    CHECK_NOTHROW(c.validate());
    CHECK(c.hash().size() == 64);
    SamplerConfig d = c;
    d.k_ref = 3;
    CHECK(d.hash() != c.hash());
    for (auto mutate : std::initializer_list<void (*)(SamplerConfig&)>{
             [](SamplerConfig& s) { s.n_steps = 0; }, [](SamplerConfig& s) { s.alpha_ref = 0.0; },
             [](SamplerConfig& s) { s.sigma_mag = 0.0; }, [](SamplerConfig& s) { s.clamp_norm = 0.0; }}) {
      SamplerConfig bad;
      mutate(bad);
      CHECK_THROWS_AS(bad.validate(), Error);
    }
  }

  TEST_CASE("data loss: zero at the truth and sigma scaling per block") {
    const VoxelGrid g(2, 2, 2, 1.0);
    const auto survey = regular_survey(g, 2, 2, 2.0);
    const auto op = assemble_joint_operator(g, survey, {}, {});
    const IdentityDecoder dec(2 * g.size(), {g.size(), g.size()});
    std::mt19937_64 rng(2);
    auto z = oracle::randn(2 * g.size(), rng);
    const auto pred = op.apply(z);
    FieldData data{survey,
                   std::vector<double>(pred.begin(), pred.begin() + 4),
                   std::vector<double>(pred.begin() + 4, pred.end()),
                   NoiseModel::broadcast(4, 1.0, 4, 1.0),
                   {},
                   {}};
    SamplerConfig cfg;
    CHECK(data_consistency_loss(z, joint_observation(data, cfg), dec, op) == 0.0);
    for (double& v : data.grav) v += 0.3;
    const double l1 = data_consistency_loss(z, joint_observation(data, cfg), dec, op);
    cfg.sigma_grav *= 2.0;
    const double l2 = data_consistency_loss(z, joint_observation(data, cfg), dec, op);
    CHECK(l2 == doctest::Approx(l1 / 4.0).epsilon(1e-13));
    const auto obs = joint_observation(data, cfg);
    CHECK(obs.sigma[0] == cfg.sigma_grav);
    CHECK(obs.sigma[7] == cfg.sigma_mag);
  }

  TEST_CASE("data loss gradient: finite differences and adjoint composition") {
    const auto t = make_toy(3);
    const LinearDecoder dec(t.n, t.n, t.W, {}, {0, 0});
    const auto op = SensitivityOperator::from_matrix(t.m, t.n, t.A);
    const Observation obs{t.y, t.sigma};
    std::mt19937_64 rng(4);
    const auto z = oracle::randn(t.n, rng);
    const auto grad = data_consistency_gradient(z, obs, dec, op);
    const auto fd = oracle::fd_gradient(
        [&](std::span<const double> x) { return data_consistency_loss(x, obs, dec, op); }, z, 1e-6);
    CHECK(oracle::rel_max(grad, fd) < 1e-6);

    // explicit W^T A^T Sigma^-1 (A W z - y)
    const auto AW = matmul(t.A, t.W, t.m, t.n, t.n);
    const auto r = matmul(AW, z, t.m, t.n, 1);
    std::vector<double> wr(t.m);
    for (std::size_t i = 0; i < t.m; ++i) wr[i] = (r[i] - t.y[i]) / (t.sigma[i] * t.sigma[i]);
    const auto ref = matmul(transpose(AW, t.m, t.n), wr, t.n, t.m, 1);
    CHECK(oracle::rel_max(grad, ref) < 1e-10);
  }

  TEST_CASE("refinement") {
    const auto t = make_toy(5);
    const IdentityDecoder dec(t.n, {0, 0});
    const auto op = SensitivityOperator::from_matrix(t.m, t.n, t.A);
    const Observation obs{t.y, t.sigma};
    std::mt19937_64 rng(6);
    const auto z = oracle::randn(t.n, rng);

    SamplerConfig cfg;
    cfg.k_ref = 0;
    CHECK(refine_endpoint(z, obs, dec, op, cfg) == z);

    const double lip = data_lipschitz_estimate(obs, dec, op, 200);
    cfg.alpha_ref = 0.9 / lip;
    cfg.k_ref = 1;
    auto cur = z;
    // closed-form quadratic descent z <- z - alpha A^T Sigma^-1 (A z - y)
    auto ref = z;
    double prev = data_consistency_loss(cur, obs, dec, op);
    for (int k = 0; k < 8; ++k) {
      cur = refine_endpoint(cur, obs, dec, op, cfg);
      const double l = data_consistency_loss(cur, obs, dec, op);
      CHECK(l < prev);
      prev = l;
      const auto r = matmul(t.A, ref, t.m, t.n, 1);
      std::vector<double> wr(t.m);
      for (std::size_t i = 0; i < t.m; ++i) wr[i] = (r[i] - t.y[i]) / (t.sigma[i] * t.sigma[i]);
      const auto gr = matmul(transpose(t.A, t.m, t.n), wr, t.n, t.m, 1);
      for (std::size_t i = 0; i < t.n; ++i) ref[i] -= cfg.alpha_ref * gr[i];
    }
    CHECK(oracle::rel_max(cur, ref) < 1e-12);

    SamplerConfig eight = cfg;
    eight.k_ref = 8;
    CHECK(oracle::rel_max(refine_endpoint(z, obs, dec, op, eight), cur) < 1e-12);

    // largest eigenvalue of A^T Sigma^-1 A against power iteration on the explicit matrix
    std::vector<double> H(t.n * t.n, 0.0);
    for (std::size_t r = 0; r < t.m; ++r)
      for (std::size_t i = 0; i < t.n; ++i)
        for (std::size_t j = 0; j < t.n; ++j)
          H[i * t.n + j] += t.A[r * t.n + i] * t.A[r * t.n + j] / (t.sigma[r] * t.sigma[r]);
    std::vector<double> v(t.n, 1.0);
    double lam = 0.0;
    for (int it = 0; it < 2000; ++it) {
      auto hv = matmul(H, v, t.n, t.n, 1);
      lam = oracle::norm2(hv);
      for (std::size_t i = 0; i < t.n; ++i) v[i] = hv[i] / lam;
    }
    CHECK(lip == doctest::Approx(lam).epsilon(1e-6));
  }

  TEST_CASE("refinement aborts on a non-finite gradient") {
    const auto op = SensitivityOperator::from_matrix(1, 1, {1.0});
    const IdentityDecoder dec(1, {0, 0});
    const Observation obs{{NAN}, {1.0}};
    SamplerConfig cfg;
    try {
      (void)refine_endpoint(std::vector<double>{0.0}, obs, dec, op, cfg);
      FAIL("expected a numeric error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Numeric);
    }
  }

  TEST_CASE("clamp score") {
    bool hit = true;
    const std::vector<double> small{0.3, 0.4};  // norm 0.5
    CHECK(clamp_score(small, 1.0, &hit) == small);
    CHECK_FALSE(hit);
    const std::vector<double> big{1.2, 1.6};  // norm 2
    const auto c = clamp_score(big, 1.0, &hit);
    CHECK(hit);
    CHECK(oracle::norm2(c) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(oracle::dot(c, big) / (oracle::norm2(c) * oracle::norm2(big)) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(clamp_score(std::vector<double>{0.0, 0.0}, 1.0) == std::vector<double>{0.0, 0.0});
    CHECK_THROWS_AS((void)clamp_score(big, 0.0), Error);
    std::mt19937_64 rng(7);
    for (int k = 0; k < 100; ++k) {
      const auto g = oracle::randn(5, rng, 3.0);
      CHECK(oracle::norm2(clamp_score(g, 2.0)) <= oracle::norm2(g) * (1 + 1e-15));
    }
  }

  TEST_CASE("GL guidance score") {
    const VoxelGrid g(4, 4, 4, 1.0);
    const GuidanceContext ctx{g, {0.0, 0.2}};
    const IdentityDecoder dec(g.size(), {0, g.size()});
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 0.2);
    std::vector<double> z(g.size());
    for (double& v : z) v = u(rng);
    GLParams gl;
    gl.kappa = 0.7;
    gl.eps = 0.5;
    gl.lambda0 = 0.0;
    for (double v : gl_guidance_score(z, 0.3, dec, ctx, gl)) CHECK(v == 0.0);
    gl.lambda0 = 2.0;
    for (double v : gl_guidance_score(z, 1.0, dec, ctx, gl)) CHECK(v == 0.0);

    const double t = 0.35;
    const double lt = lambda_schedule(t, gl);
    const auto s = gl_guidance_score(z, t, dec, ctx, gl);
    const auto fd = oracle::fd_gradient(
        [&](std::span<const double> c) { return lt * gl_energy(g, chi_to_phi(c, ctx.bounds), gl); }, z,
        1e-7);
    std::vector<double> neg(fd.size());
    for (std::size_t i = 0; i < fd.size(); ++i) neg[i] = -fd[i];
    CHECK(oracle::rel_max(s, neg) < 1e-6);

    const IdentityDecoder no_chi(g.size(), {0, 0});
    CHECK_THROWS_AS((void)gl_guidance_score(z, t, no_chi, ctx, gl), Error);
    CHECK_THROWS_AS((void)gl_guidance_score(z, t, dec, GuidanceContext{g, {0.2, 0.1}}, gl), Error);
  }

  TEST_CASE("degenerate controls reduce to flow integration") {
    const std::size_t n = 6;
    const GaussianPriorVelocity v(std::vector<double>{0.5, -1.0, 0.0, 2.0, 0.3, 0.1}, 0.7);
    const IdentityDecoder dec(n, {0, 0});
    const auto op = SensitivityOperator::from_matrix(1, n, std::vector<double>(n, 1.0));
    const Observation obs{{3.0}, {1.0}};
    SamplerConfig cfg;
    cfg.gamma_schedule = {Schedule::Kind::Constant, 0.0};
    cfg.eta_schedule = {Schedule::Kind::Constant, 0.0};
    for (std::uint64_t seed : {1u, 2u, 99u}) {
      const auto rec = sample_posterior(obs, v, dec, op, cfg, nullptr, seed);
      NormalSource src(seed);
      std::vector<double> z0(n);
      for (double& x : z0) x = src();
      const auto ref = integrate_flow(v, z0, 1.0, 0.0, cfg.n_steps);
      CHECK(oracle::rel_max(rec.latent, ref) < 1e-12);
      CHECK(rec.steps.size() == cfg.n_steps);
    }
  }

  TEST_CASE("without guidance and refinement the trajectory ignores the data") {
    const std::size_t n = 4;
    const GaussianPriorVelocity v(std::vector<double>(n, 0.2), 1.5);
    const IdentityDecoder dec(n, {0, 0});
    const auto op = SensitivityOperator::from_matrix(2, n, {1, 0, 1, 0, 0, 1, 0, 1});
    SamplerConfig cfg;
    cfg.gamma_schedule = {Schedule::Kind::Constant, 0.0};
    const auto a = sample_posterior({{1.0, 2.0}, {1.0, 1.0}}, v, dec, op, cfg, nullptr, 5);
    const auto b = sample_posterior({{-40.0, 7.0}, {0.1, 0.1}}, v, dec, op, cfg, nullptr, 5);
    CHECK(a.latent == b.latent);
  }

  TEST_CASE("seed determinism and diagnostics length") {
    const VoxelGrid g(2, 2, 2, 1.0);
    const IdentityDecoder dec(g.size(), {0, g.size()});
    const GaussianPriorVelocity v(std::vector<double>(g.size(), 0.05), 0.05);
    std::mt19937_64 rng(9);
    const auto op = SensitivityOperator::from_matrix(3, g.size(), oracle::randn(3 * g.size(), rng));
    const Observation obs{{0.1, 0.2, 0.3}, {0.5, 0.5, 0.5}};
    SamplerConfig cfg;
    cfg.n_steps = 16;
    cfg.gl.lambda0 = 1.0;
    const GuidanceContext ctx{g, {0.0, 0.1}};
    const auto a = sample_posterior(obs, v, dec, op, cfg, &ctx, 11);
    const auto b = sample_posterior(obs, v, dec, op, cfg, &ctx, 11);
    const auto c = sample_posterior(obs, v, dec, op, cfg, &ctx, 12);
    CHECK(a.latent == b.latent);
    CHECK(a.decoded == b.decoded);
    CHECK(a.config_hash == b.config_hash);
    REQUIRE(a.steps.size() == 16);
    for (std::size_t k = 0; k < a.steps.size(); ++k) {
      CHECK(a.steps[k].data_misfit == b.steps[k].data_misfit);
      CHECK(a.steps[k].guidance_norm == b.steps[k].guidance_norm);
      CHECK(std::isfinite(a.steps[k].gl_energy));
    }
    CHECK(a.latent != c.latent);
    CHECK(a.seed == 11);

    const auto chains = sample_chains(obs, v, dec, op, cfg, &ctx, 3, 11);
    REQUIRE(chains.size() == 3);
    CHECK(chains[1].latent == sample_posterior(obs, v, dec, op, cfg, &ctx, chain_seed(11, 1)).latent);
    CHECK(chain_seed(11, 0) != chain_seed(11, 1));
  }

  TEST_CASE("a diverging chain is reported as aborted") {
    const std::size_t n = 2;
    const GaussianPriorVelocity v(std::vector<double>(n, 0.0), 1.0);
    const IdentityDecoder dec(n, {0, 0});
    const auto op = SensitivityOperator::from_matrix(1, n, {1e6, 1e6});
    SamplerConfig cfg;
    cfg.alpha_ref = 10.0;
    const auto rec = sample_posterior({{1.0}, {1.0}}, v, dec, op, cfg, nullptr, 1);
    CHECK(rec.aborted);
    CHECK(rec.abort_step < cfg.n_steps);
    CHECK_FALSE(rec.abort_reason.empty());
  }

  TEST_CASE("normalised refinement step keeps a stiff problem stable") {
    const std::size_t n = 2;
    const GaussianPriorVelocity v(std::vector<double>(n, 0.0), 1.0);
    const IdentityDecoder dec(n, {0, 0});
    const auto op = SensitivityOperator::from_matrix(1, n, {1e3, 1e3});
    SamplerConfig cfg;
    cfg.normalise_step = true;
    const auto rec = sample_posterior({{1.0}, {1.0}}, v, dec, op, cfg, nullptr, 1);
    CHECK_FALSE(rec.aborted);
    CHECK(rec.alpha == doctest::Approx(0.1 / 2e6).epsilon(1e-6));
  }
}
