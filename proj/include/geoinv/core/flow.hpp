#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace geoinv {

// Linear-flow convention: z_t = (1 - t) z0 + t z1, t = 0 data, t = 1 noise.
struct FlowState {
  std::vector<double> z;
  double t = 1.0;

  void validate() const;
};

class VelocityField {
 public:
  virtual ~VelocityField() = default;
  virtual std::size_t dim() const noexcept = 0;
  virtual std::vector<double> evaluate(std::span<const double> z, double t) const = 0;
};

// E[z1 - z0 | z_t = z] for z0 ~ N(mu, sigma0^2 I), z1 ~ N(0, I) independent.
std::vector<double> gaussian_velocity(std::span<const double> z, double t,
                                      std::span<const double> mu, double sigma0);

/// Exact velocity of the linear flow between a Gaussian data distribution
/// and standard normal noise.
class GaussianPriorVelocity final : public VelocityField {
 public:
  GaussianPriorVelocity(std::vector<double> mu, double sigma0);

  std::size_t dim() const noexcept override { return mu_.size(); }
  std::vector<double> evaluate(std::span<const double> z, double t) const override;
  const std::vector<double>& mu() const noexcept { return mu_; }
  double sigma0() const noexcept { return sigma0_; }

 private:
  std::vector<double> mu_;
  double sigma0_;
};

/// Affine-in-z velocity tabulated on time knots, v(z, t) = a(t) * z + b(t)
/// elementwise, linearly interpolated in t. Lets externally fitted fields be
/// loaded from JSON:
///   {"times":[...], "scale":[[...],...], "offset":[[...],...]}
class TabulatedVelocity final : public VelocityField {
 public:
  TabulatedVelocity(std::vector<double> times, std::vector<std::vector<double>> scale,
                    std::vector<std::vector<double>> offset);

  static TabulatedVelocity from_json(const std::string& text);
  static TabulatedVelocity from_file(const std::string& path);
  // Samples an existing field's affine coefficients on `knots` by probing it
  // at z = 0 and z = e_i; exact for affine fields.
  static TabulatedVelocity tabulate(const VelocityField& field, std::span<const double> knots);

  std::size_t dim() const noexcept override { return dim_; }
  std::vector<double> evaluate(std::span<const double> z, double t) const override;
  std::string to_json() const;

 private:
  std::size_t dim_;
  std::vector<double> times_;
  std::vector<std::vector<double>> scale_;
  std::vector<std::vector<double>> offset_;
};

struct EndpointEstimates {
  std::vector<double> z0_hat;  // z_t - t v
  std::vector<double> z1_hat;  // z_t + (1 - t) v
};

EndpointEstimates endpoint_estimates(const FlowState& s, std::span<const double> v);

enum class FlowScheme { Euler, Heun };

// Uniform steps of dz/dt = v(z, t) from t_start to t_end.
std::vector<double> integrate_flow(const VelocityField& v, std::span<const double> z_start,
                                   double t_start, double t_end, std::size_t n_steps,
                                   FlowScheme scheme = FlowScheme::Euler);

}  // namespace geoinv
