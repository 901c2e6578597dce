#include "geoinv/core/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include <json.hpp>

#include "geoinv/core/error.hpp"
#include "geoinv/core/hash.hpp"
#include "geoinv/core/parallel.hpp"
#include "geoinv/core/random.hpp"

namespace geoinv {

namespace {

void check_chi_channel(ChannelRange c, std::size_t output_dim) {
  if (c.offset + c.count > output_dim) {
    fail(ErrorCode::InvalidArgument, "chi channel extends past the decoder output");
  }
}

void check_latent(const Decoder& dec, std::span<const double> z) {
  if (z.size() != dec.latent_dim()) fail(ErrorCode::DimensionMismatch, "latent length mismatch");
}

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

void check_shapes(const Observation& obs, const Decoder& dec, const LinearOperator& op) {
  if (obs.y.size() != obs.sigma.size()) {
    fail(ErrorCode::DimensionMismatch, "observation and sigma lengths differ");
  }
  if (op.rows() != obs.y.size()) {
    fail(ErrorCode::DimensionMismatch, "operator rows do not match observation count");
  }
  if (op.cols() != dec.output_dim()) {
    fail(ErrorCode::DimensionMismatch, "operator columns do not match decoder output");
  }
  for (double s : obs.sigma) {
    if (!(s > 0.0)) fail(ErrorCode::InvalidArgument, "observation sigma must be > 0");
  }
}

std::vector<double> whitened_residual(std::span<const double> z, const Observation& obs,
                                      const Decoder& dec, const LinearOperator& op) {
  check_latent(dec, z);
  check_shapes(obs, dec, op);
  std::vector<double> r = op.apply(dec.apply(z));
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = (r[i] - obs.y[i]) / obs.sigma[i];
  return r;
}

}  // namespace

IdentityDecoder::IdentityDecoder(std::size_t dim, ChannelRange chi) : dim_(dim), chi_(chi) {
  if (dim_ == 0) fail(ErrorCode::InvalidArgument, "decoder dimension must be > 0");
  check_chi_channel(chi_, dim_);
}

std::vector<double> IdentityDecoder::apply(std::span<const double> z) const {
  check_latent(*this, z);
  return {z.begin(), z.end()};
}

std::vector<double> IdentityDecoder::adjoint_jacobian_apply(std::span<const double> z,
                                                            std::span<const double> g) const {
  check_latent(*this, z);
  if (g.size() != dim_) fail(ErrorCode::DimensionMismatch, "cotangent length mismatch");
  return {g.begin(), g.end()};
}

LinearDecoder::LinearDecoder(std::size_t output_dim, std::size_t latent_dim,
                             std::vector<double> weights, std::vector<double> bias,
                             ChannelRange chi)
    : output_(output_dim), latent_(latent_dim), weights_(std::move(weights)),
      bias_(std::move(bias)), chi_(chi) {
  if (output_ == 0 || latent_ == 0) fail(ErrorCode::InvalidArgument, "decoder dimensions must be > 0");
  if (weights_.size() != output_ * latent_) {
    fail(ErrorCode::DimensionMismatch, "decoder weight matrix has the wrong size");
  }
  if (bias_.empty()) bias_.assign(output_, 0.0);
  if (bias_.size() != output_) fail(ErrorCode::DimensionMismatch, "decoder bias has the wrong size");
  if (!all_finite(weights_) || !all_finite(bias_)) {
    fail(ErrorCode::InvalidArgument, "decoder parameters must be finite");
  }
  check_chi_channel(chi_, output_);
}

std::vector<double> LinearDecoder::apply(std::span<const double> z) const {
  check_latent(*this, z);
  std::vector<double> x(bias_);
  for (std::size_t i = 0; i < output_; ++i) {
    const double* row = weights_.data() + i * latent_;
    double s = 0.0;
    for (std::size_t j = 0; j < latent_; ++j) s += row[j] * z[j];
    x[i] += s;
  }
  return x;
}

std::vector<double> LinearDecoder::adjoint_jacobian_apply(std::span<const double> z,
                                                          std::span<const double> g) const {
  check_latent(*this, z);
  if (g.size() != output_) fail(ErrorCode::DimensionMismatch, "cotangent length mismatch");
  std::vector<double> out(latent_, 0.0);
  for (std::size_t i = 0; i < output_; ++i) {
    const double* row = weights_.data() + i * latent_;
    for (std::size_t j = 0; j < latent_; ++j) out[j] += row[j] * g[i];
  }
  return out;
}

DiagonalAffineDecoder::DiagonalAffineDecoder(std::vector<double> scale, std::vector<double> offset,
                                             ChannelRange chi)
    : scale_(std::move(scale)), offset_(std::move(offset)), chi_(chi) {
  if (scale_.empty()) fail(ErrorCode::InvalidArgument, "decoder dimension must be > 0");
  if (offset_.empty()) offset_.assign(scale_.size(), 0.0);
  if (offset_.size() != scale_.size()) {
    fail(ErrorCode::DimensionMismatch, "decoder scale and offset lengths differ");
  }
  if (!all_finite(scale_) || !all_finite(offset_)) {
    fail(ErrorCode::InvalidArgument, "decoder parameters must be finite");
  }
  check_chi_channel(chi_, scale_.size());
}

std::vector<double> DiagonalAffineDecoder::apply(std::span<const double> z) const {
  check_latent(*this, z);
  std::vector<double> x(z.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = scale_[i] * z[i] + offset_[i];
  return x;
}

std::vector<double> DiagonalAffineDecoder::adjoint_jacobian_apply(std::span<const double> z,
                                                                  std::span<const double> g) const {
  check_latent(*this, z);
  if (g.size() != scale_.size()) fail(ErrorCode::DimensionMismatch, "cotangent length mismatch");
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale_[i] * g[i];
  return out;
}

double Schedule::operator()(double t) const noexcept {
  double v = 0.0;
  switch (kind) {
    case Kind::Constant: v = param; break;
    case Kind::OneMinusT: v = param * (1.0 - t); break;
    case Kind::LinearT: v = param * t; break;
  }
  if (std::isnan(v)) return 0.0;
  return std::clamp(v, 0.0, 1.0);
}

std::string Schedule::name() const {
  switch (kind) {
    case Kind::Constant: return "constant";
    case Kind::OneMinusT: return "one_minus_t";
    case Kind::LinearT: return "linear_t";
  }
  return "constant";
}

Schedule Schedule::from_name(const std::string& name, double param) {
  if (!std::isfinite(param)) fail(ErrorCode::Config, "schedule parameter must be finite");
  if (name == "constant") return {Kind::Constant, param};
  if (name == "one_minus_t") return {Kind::OneMinusT, param};
  if (name == "linear_t") return {Kind::LinearT, param};
  fail(ErrorCode::Config, "unknown schedule '" + name + "'");
}

void SamplerConfig::validate() const {
  if (n_steps < 1) fail(ErrorCode::Config, "n_steps must be >= 1");
  if (!(alpha_ref > 0.0) || !std::isfinite(alpha_ref)) fail(ErrorCode::Config, "alpha_ref must be > 0");
  if (!(sigma_mag > 0.0) || !std::isfinite(sigma_mag)) fail(ErrorCode::Config, "sigma_mag must be > 0");
  if (!(sigma_grav > 0.0) || !std::isfinite(sigma_grav)) {
    fail(ErrorCode::Config, "sigma_grav must be > 0");
  }
  if (!(clamp_norm > 0.0) || !std::isfinite(clamp_norm)) {
    fail(ErrorCode::Config, "clamp_norm must be > 0");
  }
  gl.validate();
}

std::string SamplerConfig::canonical_json() const {
  nlohmann::json j;
  j["n_steps"] = n_steps;
  j["k_ref"] = k_ref;
  j["alpha_ref"] = alpha_ref;
  j["sigma_mag"] = sigma_mag;
  j["sigma_grav"] = sigma_grav;
  j["clamp_norm"] = clamp_norm;
  j["gamma_schedule"] = {{"name", gamma_schedule.name()}, {"param", gamma_schedule.param}};
  j["eta_schedule"] = {{"name", eta_schedule.name()}, {"param", eta_schedule.param}};
  j["gl"] = {{"kappa", gl.kappa},     {"eps", gl.eps},       {"lambda0", gl.lambda0},
             {"gamma", gl.gamma},     {"lambda_gl", gl.lambda_gl}};
  j["guidance_mode"] = guidance_mode == GuidanceMode::Velocity ? "velocity" : "refinement";
  j["normalise_step"] = normalise_step;
  return j.dump();
}

std::string SamplerConfig::hash() const { return sha256_hex(canonical_json()); }

Observation joint_observation(const FieldData& data, const SamplerConfig& cfg) {
  data.validate();
  Observation obs;
  obs.y = data.stacked();
  obs.sigma.assign(data.grav.size(), cfg.sigma_grav);
  obs.sigma.insert(obs.sigma.end(), data.mag.size(), cfg.sigma_mag);
  return obs;
}

double data_consistency_loss(std::span<const double> z, const Observation& obs, const Decoder& dec,
                             const LinearOperator& op) {
  const std::vector<double> r = whitened_residual(z, obs, dec, op);
  double s = 0.0;
  for (double v : r) s += v * v;
  return 0.5 * s;
}

std::vector<double> data_consistency_gradient(std::span<const double> z, const Observation& obs,
                                              const Decoder& dec, const LinearOperator& op) {
  std::vector<double> r = whitened_residual(z, obs, dec, op);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] /= obs.sigma[i];
  return dec.adjoint_jacobian_apply(z, op.adjoint(r));
}

std::vector<double> clamp_score(std::span<const double> g, double max_norm, bool* activated) {
  if (!(max_norm > 0.0)) fail(ErrorCode::InvalidArgument, "clamp norm must be > 0");
  std::vector<double> out(g.begin(), g.end());
  const double n = norm2(g);
  const bool hit = n > max_norm;
  if (hit) {
    const double s = max_norm / n;
    for (double& v : out) v *= s;
  }
  if (activated != nullptr) *activated = hit;
  return out;
}

std::vector<double> gl_guidance_score(std::span<const double> z, double t, const Decoder& dec,
                                      const GuidanceContext& ctx, const GLParams& gl) {
  ctx.bounds.validate();
  gl.validate();
  check_latent(dec, z);
  const ChannelRange c = dec.chi_channel();
  if (c.count == 0) fail(ErrorCode::InvalidArgument, "decoder has no susceptibility channel");
  if (c.count != ctx.grid.size()) {
    fail(ErrorCode::DimensionMismatch, "susceptibility channel does not match the grid");
  }
  const double lambda_t = lambda_schedule(t, gl);
  if (lambda_t == 0.0) return std::vector<double>(dec.latent_dim(), 0.0);

  const std::vector<double> x = dec.apply(z);
  GLParams weighted = gl;
  weighted.lambda_gl = lambda_t;
  const std::vector<double> chi_score = gl_prior_score_chi(
      ctx.grid, std::span<const double>(x).subspan(c.offset, c.count), ctx.bounds, weighted);
  std::vector<double> g(dec.output_dim(), 0.0);
  std::copy(chi_score.begin(), chi_score.end(), g.begin() + static_cast<std::ptrdiff_t>(c.offset));
  return dec.adjoint_jacobian_apply(z, g);
}

std::vector<double> refine_endpoint(std::span<const double> z0_hat, const Observation& obs,
                                    const Decoder& dec, const LinearOperator& op,
                                    const SamplerConfig& cfg, double t,
                                    const GuidanceContext* guidance) {
  std::vector<double> z(z0_hat.begin(), z0_hat.end());
  const bool guided = guidance != nullptr && cfg.guidance_mode == GuidanceMode::Refinement &&
                      lambda_schedule(t, cfg.gl) > 0.0;
  for (std::size_t k = 0; k < cfg.k_ref; ++k) {
    std::vector<double> grad = data_consistency_gradient(z, obs, dec, op);
    if (guided) {
      const std::vector<double> s =
          clamp_score(gl_guidance_score(z, t, dec, *guidance, cfg.gl), cfg.clamp_norm);
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] -= s[i];
    }
    if (!all_finite(grad)) {
      fail(ErrorCode::Numeric, "non-finite refinement gradient at iteration " + std::to_string(k));
    }
    for (std::size_t i = 0; i < z.size(); ++i) z[i] -= cfg.alpha_ref * grad[i];
  }
  return z;
}

double data_lipschitz_estimate(const Observation& obs, const Decoder& dec, const LinearOperator& op,
                               std::size_t iters) {
  check_shapes(obs, dec, op);
  const std::size_t d = dec.latent_dim();
  const std::vector<double> zero(d, 0.0);
  const std::vector<double> base = dec.apply(zero);
  std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
  double lambda = 0.0;
  for (std::size_t k = 0; k < iters; ++k) {
    std::vector<double> jv = dec.apply(v);
    for (std::size_t i = 0; i < jv.size(); ++i) jv[i] -= base[i];
    std::vector<double> r = op.apply(jv);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] /= obs.sigma[i] * obs.sigma[i];
    std::vector<double> w = dec.adjoint_jacobian_apply(zero, op.adjoint(r));
    const double nw = norm2(w);
    if (!(nw > 0.0) || !std::isfinite(nw)) return nw;
    lambda = nw;
    for (std::size_t i = 0; i < d; ++i) v[i] = w[i] / nw;
  }
  return lambda;
}

SampleRecord sample_posterior(const Observation& obs, const VelocityField& v, const Decoder& dec,
                              const LinearOperator& op, const SamplerConfig& user_cfg,
                              const GuidanceContext* guidance, std::uint64_t seed) {
  user_cfg.validate();
  SamplerConfig cfg = user_cfg;
  if (cfg.normalise_step) {
    const double lip = data_lipschitz_estimate(obs, dec, op);
    if (lip > 0.0 && std::isfinite(lip)) cfg.alpha_ref = user_cfg.alpha_ref / lip;
  }
  check_shapes(obs, dec, op);
  if (v.dim() != dec.latent_dim()) {
    fail(ErrorCode::DimensionMismatch, "velocity field and decoder latent sizes differ");
  }
  if (guidance != nullptr) {
    const ChannelRange c = dec.chi_channel();
    if (c.count != guidance->grid.size()) {
      fail(ErrorCode::DimensionMismatch, "susceptibility channel does not match the grid");
    }
    guidance->bounds.validate();
  }

  const std::size_t d = dec.latent_dim();
  SampleRecord rec;
  rec.seed = seed;
  rec.config_hash = user_cfg.hash();
  rec.alpha = cfg.alpha_ref;
  rec.steps.reserve(cfg.n_steps);

  NormalSource noise(seed);
  std::vector<double> z(d);
  for (double& x : z) x = noise();

  const double n = static_cast<double>(cfg.n_steps);
  std::vector<double> eps(d);
  for (std::size_t k = 0; k < cfg.n_steps; ++k) {
    const double t = 1.0 - static_cast<double>(k) / n;
    const double t_next = 1.0 - static_cast<double>(k + 1) / n;
    StepDiagnostics diag;
    diag.t = t;
    diag.gl_energy = std::nan("");
    try {
      std::vector<double> vel = v.evaluate(z, t);
      if (guidance != nullptr && cfg.guidance_mode == GuidanceMode::Velocity && t < 1.0 &&
          lambda_schedule(t, cfg.gl) > 0.0) {
        const std::vector<double> s = gl_guidance_score(z, t, dec, *guidance, cfg.gl);
        diag.guidance_norm = norm2(s);
        const std::vector<double> sc = clamp_score(s, cfg.clamp_norm, &diag.clamped);
        // Linear-flow score/velocity relation: dv/ds = -t / (1 - t).
        const double factor = t / (1.0 - t);
        for (std::size_t i = 0; i < d; ++i) vel[i] -= factor * sc[i];
      }
      EndpointEstimates e = endpoint_estimates(FlowState{z, t}, vel);

      const double gamma = cfg.gamma_schedule(t);
      const double eta = cfg.eta_schedule(t);
      std::vector<double> z0 = std::move(e.z0_hat);
      if (gamma > 0.0) {
        const std::vector<double> ref = refine_endpoint(z0, obs, dec, op, cfg, t, guidance);
        if (cfg.guidance_mode == GuidanceMode::Refinement && guidance != nullptr &&
            lambda_schedule(t, cfg.gl) > 0.0) {
          const std::vector<double> s = gl_guidance_score(z0, t, dec, *guidance, cfg.gl);
          diag.guidance_norm = norm2(s);
          diag.clamped = diag.guidance_norm > cfg.clamp_norm;
        }
        for (std::size_t i = 0; i < d; ++i) z0[i] = (1.0 - gamma) * z0[i] + gamma * ref[i];
      }
      for (double& x : eps) x = noise();
      const double keep = std::sqrt(1.0 - eta);
      const double fresh = std::sqrt(eta);
      for (std::size_t i = 0; i < d; ++i) {
        const double z1 = keep * e.z1_hat[i] + fresh * eps[i];
        z[i] = (1.0 - t_next) * z0[i] + t_next * z1;
      }

      diag.data_misfit = data_consistency_loss(z0, obs, dec, op);
      if (guidance != nullptr) {
        const std::vector<double> x = dec.apply(z0);
        const ChannelRange c = dec.chi_channel();
        const std::vector<double> phi = chi_to_phi(
            std::span<const double>(x).subspan(c.offset, c.count), guidance->bounds);
        diag.gl_energy = gl_energy(guidance->grid, phi, cfg.gl);
      }
      if (!all_finite(z)) fail(ErrorCode::Numeric, "non-finite latent state");
    } catch (const Error& err) {
      if (err.code() != ErrorCode::Numeric) throw;
      rec.steps.push_back(diag);
      rec.aborted = true;
      rec.abort_step = k;
      rec.abort_reason = err.what();
      rec.latent = z;
      return rec;
    }
    rec.steps.push_back(diag);
  }
  rec.latent = z;
  rec.decoded = dec.apply(z);
  return rec;
}

std::uint64_t chain_seed(std::uint64_t base, std::uint64_t chain) noexcept {
  std::uint64_t x = base + 0x9E3779B97F4A7C15ULL * (chain + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::vector<SampleRecord> sample_chains(const Observation& obs, const VelocityField& v,
                                        const Decoder& dec, const LinearOperator& op,
                                        const SamplerConfig& cfg, const GuidanceContext* guidance,
                                        std::size_t n_chains, std::uint64_t base_seed) {
  cfg.validate();
  std::vector<SampleRecord> out(n_chains);
  std::exception_ptr first;
  const long long n = static_cast<long long>(n_chains);
#pragma omp parallel for schedule(dynamic) num_threads(thread_count())
  for (long long c = 0; c < n; ++c) {
    try {
      out[static_cast<std::size_t>(c)] = sample_posterior(
          obs, v, dec, op, cfg, guidance, chain_seed(base_seed, static_cast<std::uint64_t>(c)));
    } catch (...) {
#pragma omp critical(geoinv_sampler_error)
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
  return out;
}

}  // namespace geoinv
