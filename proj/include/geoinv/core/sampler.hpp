#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geoinv/core/flow.hpp"
#include "geoinv/core/forward.hpp"
#include "geoinv/core/gl.hpp"
#include "geoinv/core/grid.hpp"

namespace geoinv {

// Contiguous slice of a decoded vector.
struct ChannelRange {
  std::size_t offset = 0;
  std::size_t count = 0;
};

/// Map from latent space to model space, with the transposed Jacobian.
class Decoder {
 public:
  virtual ~Decoder() = default;
  virtual std::size_t latent_dim() const noexcept = 0;
  virtual std::size_t output_dim() const noexcept = 0;
  virtual std::vector<double> apply(std::span<const double> z) const = 0;
  // J(z)^T g for g of length output_dim().
  virtual std::vector<double> adjoint_jacobian_apply(std::span<const double> z,
                                                     std::span<const double> g) const = 0;
  // Decoded entries holding susceptibility; count == 0 when there are none.
  virtual ChannelRange chi_channel() const noexcept = 0;
};

class IdentityDecoder final : public Decoder {
 public:
  IdentityDecoder(std::size_t dim, ChannelRange chi);

  std::size_t latent_dim() const noexcept override { return dim_; }
  std::size_t output_dim() const noexcept override { return dim_; }
  std::vector<double> apply(std::span<const double> z) const override;
  std::vector<double> adjoint_jacobian_apply(std::span<const double> z,
                                             std::span<const double> g) const override;
  ChannelRange chi_channel() const noexcept override { return chi_; }

 private:
  std::size_t dim_;
  ChannelRange chi_;
};

// x = W z + b with a dense row-major W (output_dim x latent_dim).
class LinearDecoder final : public Decoder {
 public:
  LinearDecoder(std::size_t output_dim, std::size_t latent_dim, std::vector<double> weights,
                std::vector<double> bias, ChannelRange chi);

  std::size_t latent_dim() const noexcept override { return latent_; }
  std::size_t output_dim() const noexcept override { return output_; }
  std::vector<double> apply(std::span<const double> z) const override;
  std::vector<double> adjoint_jacobian_apply(std::span<const double> z,
                                             std::span<const double> g) const override;
  ChannelRange chi_channel() const noexcept override { return chi_; }

 private:
  std::size_t output_;
  std::size_t latent_;
  std::vector<double> weights_;
  std::vector<double> bias_;
  ChannelRange chi_;
};

// x = scale * z + offset elementwise; maps a standardised latent to physical units.
class DiagonalAffineDecoder final : public Decoder {
 public:
  DiagonalAffineDecoder(std::vector<double> scale, std::vector<double> offset, ChannelRange chi);

  std::size_t latent_dim() const noexcept override { return scale_.size(); }
  std::size_t output_dim() const noexcept override { return scale_.size(); }
  std::vector<double> apply(std::span<const double> z) const override;
  std::vector<double> adjoint_jacobian_apply(std::span<const double> z,
                                             std::span<const double> g) const override;
  ChannelRange chi_channel() const noexcept override { return chi_; }

 private:
  std::vector<double> scale_;
  std::vector<double> offset_;
  ChannelRange chi_;
};

/// Named time schedule, clamped to [0, 1].
struct Schedule {
  enum class Kind { Constant, OneMinusT, LinearT };

  Kind kind = Kind::Constant;
  double param = 0.0;  // Constant: value; OneMinusT: param*(1-t); LinearT: param*t

  double operator()(double t) const noexcept;
  std::string name() const;
  static Schedule from_name(const std::string& name, double param);
};

enum class GuidanceMode {
  Velocity,    // clamped GL score folded into the velocity
  Refinement,  // clamped GL score added to the refinement descent direction
};

struct SamplerConfig {
  std::size_t n_steps = 64;
  std::size_t k_ref = 8;
  double alpha_ref = 0.1;
  double sigma_mag = 15.0;   // nT
  double sigma_grav = 0.1;   // mGal
  double clamp_norm = 100.0;
  Schedule gamma_schedule{Schedule::Kind::OneMinusT, 1.0};
  Schedule eta_schedule{Schedule::Kind::LinearT, 0.3};
  GLParams gl{};  // guidance is active when gl.lambda0 > 0
  GuidanceMode guidance_mode = GuidanceMode::Velocity;
  // Divide alpha_ref by the largest eigenvalue of J^T A^T Sigma^-1 A J so the
  // refinement step is scale free.
  bool normalise_step = false;

  void validate() const;
  std::string canonical_json() const;
  std::string hash() const;  // SHA-256 of canonical_json()
};

struct Observation {
  std::vector<double> y;
  std::vector<double> sigma;
};

// [grav; mag] observations with sigma_grav / sigma_mag broadcast per block.
Observation joint_observation(const FieldData& data, const SamplerConfig& cfg);

// Grid and bounds used to turn the decoded chi channel into a phase field.
struct GuidanceContext {
  VoxelGrid grid;
  ChiBounds bounds;
};

// 1/2 || A D(z) - y ||^2_{Sigma^-1}
double data_consistency_loss(std::span<const double> z, const Observation& obs, const Decoder& dec,
                             const LinearOperator& op);
// J^T A^T Sigma^-1 (A D(z) - y)
std::vector<double> data_consistency_gradient(std::span<const double> z, const Observation& obs,
                                              const Decoder& dec, const LinearOperator& op);

// Rescales g to max_norm when its 2-norm exceeds it.
std::vector<double> clamp_score(std::span<const double> g, double max_norm,
                                bool* activated = nullptr);

// (dD_chi/dz)^T (-lambda_t grad_chi E_GL(phi(D_chi(z)))).
std::vector<double> gl_guidance_score(std::span<const double> z, double t, const Decoder& dec,
                                      const GuidanceContext& ctx, const GLParams& gl);

// k_ref steps of gradient descent with step alpha_ref on the data loss. In
// refinement guidance mode `guide` (evaluated per iterate) is subtracted
// from the gradient.
std::vector<double> refine_endpoint(std::span<const double> z0_hat, const Observation& obs,
                                    const Decoder& dec, const LinearOperator& op,
                                    const SamplerConfig& cfg, double t = 0.0,
                                    const GuidanceContext* guidance = nullptr);

// Power-iteration estimate of the largest eigenvalue of J^T A^T Sigma^-1 A J,
// with J v = D(v) - D(0) (exact for affine decoders).
double data_lipschitz_estimate(const Observation& obs, const Decoder& dec, const LinearOperator& op,
                               std::size_t iters = 50);

struct StepDiagnostics {
  double t = 0.0;
  double data_misfit = 0.0;   // loss at the blended endpoint
  double gl_energy = 0.0;     // NaN when no guidance context is available
  double guidance_norm = 0.0; // before clamping
  bool clamped = false;
};

struct SampleRecord {
  std::vector<double> latent;   // z at t = 0
  std::vector<double> decoded;  // D(latent)
  std::vector<StepDiagnostics> steps;
  std::uint64_t seed = 0;
  std::string config_hash;
  double alpha = 0.0;  // refinement step actually used
  bool aborted = false;
  std::size_t abort_step = 0;
  std::string abort_reason;
};

/// One FlowDPS chain from z ~ N(0, I) at t = 1 down to t = 0.
SampleRecord sample_posterior(const Observation& obs, const VelocityField& v, const Decoder& dec,
                              const LinearOperator& op, const SamplerConfig& cfg,
                              const GuidanceContext* guidance, std::uint64_t seed);

// Per-chain seed derived from a base seed (splitmix64).
std::uint64_t chain_seed(std::uint64_t base, std::uint64_t chain) noexcept;

// Independent chains run concurrently; result order follows chain index.
std::vector<SampleRecord> sample_chains(const Observation& obs, const VelocityField& v,
                                        const Decoder& dec, const LinearOperator& op,
                                        const SamplerConfig& cfg, const GuidanceContext* guidance,
                                        std::size_t n_chains, std::uint64_t base_seed);

}  // namespace geoinv
