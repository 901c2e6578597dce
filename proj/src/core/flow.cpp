#include "geoinv/core/flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "geoinv/core/error.hpp"

namespace geoinv {

void FlowState::validate() const {
  if (!(t >= 0.0 && t <= 1.0)) fail(ErrorCode::Domain, "flow time must lie in [0, 1]");
  for (double v : z) {
    if (!std::isfinite(v)) fail(ErrorCode::Domain, "flow state contains non-finite values");
  }
}

std::vector<double> gaussian_velocity(std::span<const double> z, double t,
                                      std::span<const double> mu, double sigma0) {
  if (!(sigma0 > 0.0)) fail(ErrorCode::InvalidArgument, "sigma0 must be > 0");
  if (z.size() != mu.size()) fail(ErrorCode::DimensionMismatch, "latent and mean lengths differ");
  const double s = 1.0 - t;
  const double var0 = sigma0 * sigma0;
  const double st2 = s * s * var0 + t * t;
  std::vector<double> v(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = z[i] - s * mu[i];
    const double e0 = mu[i] + (s * var0 / st2) * d;
    const double e1 = (t / st2) * d;
    v[i] = e1 - e0;
  }
  return v;
}

GaussianPriorVelocity::GaussianPriorVelocity(std::vector<double> mu, double sigma0)
    : mu_(std::move(mu)), sigma0_(sigma0) {
  if (mu_.empty()) fail(ErrorCode::InvalidArgument, "Gaussian prior needs a non-empty mean");
  if (!(sigma0_ > 0.0) || !std::isfinite(sigma0_)) {
    fail(ErrorCode::InvalidArgument, "sigma0 must be > 0");
  }
}

std::vector<double> GaussianPriorVelocity::evaluate(std::span<const double> z, double t) const {
  return gaussian_velocity(z, t, mu_, sigma0_);
}

TabulatedVelocity::TabulatedVelocity(std::vector<double> times,
                                     std::vector<std::vector<double>> scale,
                                     std::vector<std::vector<double>> offset)
    : dim_(0), times_(std::move(times)), scale_(std::move(scale)), offset_(std::move(offset)) {
  if (times_.empty()) fail(ErrorCode::Format, "tabulated velocity needs at least one knot");
  if (scale_.size() != times_.size() || offset_.size() != times_.size()) {
    fail(ErrorCode::Format, "tabulated velocity: one scale and offset row per knot");
  }
  if (!std::is_sorted(times_.begin(), times_.end()) ||
      std::adjacent_find(times_.begin(), times_.end()) != times_.end()) {
    fail(ErrorCode::Format, "tabulated velocity knots must be strictly increasing");
  }
  dim_ = scale_.front().size();
  if (dim_ == 0) fail(ErrorCode::Format, "tabulated velocity has zero dimension");
  for (std::size_t k = 0; k < times_.size(); ++k) {
    if (scale_[k].size() != dim_ || offset_[k].size() != dim_) {
      fail(ErrorCode::Format, "tabulated velocity rows have inconsistent lengths");
    }
  }
}

TabulatedVelocity TabulatedVelocity::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, std::string("tabulated velocity: ") + e.what());
  }
  for (const auto& [key, value] : j.items()) {
    if (key != "times" && key != "scale" && key != "offset") {
      fail(ErrorCode::Config, "tabulated velocity: unknown key '" + key + "'");
    }
  }
  try {
    return TabulatedVelocity(j.at("times").get<std::vector<double>>(),
                             j.at("scale").get<std::vector<std::vector<double>>>(),
                             j.at("offset").get<std::vector<std::vector<double>>>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, std::string("tabulated velocity: ") + e.what());
  }
}

TabulatedVelocity TabulatedVelocity::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open velocity table '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

TabulatedVelocity TabulatedVelocity::tabulate(const VelocityField& field,
                                              std::span<const double> knots) {
  const std::size_t d = field.dim();
  std::vector<std::vector<double>> scale;
  std::vector<std::vector<double>> offset;
  for (double t : knots) {
    std::vector<double> z(d, 0.0);
    std::vector<double> b = field.evaluate(z, t);
    std::vector<double> a(d);
    for (std::size_t i = 0; i < d; ++i) {
      z[i] = 1.0;
      a[i] = field.evaluate(z, t)[i] - b[i];
      z[i] = 0.0;
    }
    scale.push_back(std::move(a));
    offset.push_back(std::move(b));
  }
  return TabulatedVelocity({knots.begin(), knots.end()}, std::move(scale), std::move(offset));
}

std::vector<double> TabulatedVelocity::evaluate(std::span<const double> z, double t) const {
  if (z.size() != dim_) fail(ErrorCode::DimensionMismatch, "tabulated velocity: wrong latent size");
  std::size_t k0 = 0;
  std::size_t k1 = 0;
  double w = 0.0;
  if (t <= times_.front()) {
    k0 = k1 = 0;
  } else if (t >= times_.back()) {
    k0 = k1 = times_.size() - 1;
  } else {
    k1 = static_cast<std::size_t>(std::upper_bound(times_.begin(), times_.end(), t) - times_.begin());
    k0 = k1 - 1;
    w = (t - times_[k0]) / (times_[k1] - times_[k0]);
  }
  std::vector<double> v(dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    const double a = (1.0 - w) * scale_[k0][i] + w * scale_[k1][i];
    const double b = (1.0 - w) * offset_[k0][i] + w * offset_[k1][i];
    v[i] = a * z[i] + b;
  }
  return v;
}

std::string TabulatedVelocity::to_json() const {
  nlohmann::json j;
  j["times"] = times_;
  j["scale"] = scale_;
  j["offset"] = offset_;
  return j.dump();
}

EndpointEstimates endpoint_estimates(const FlowState& s, std::span<const double> v) {
  if (v.size() != s.z.size()) fail(ErrorCode::DimensionMismatch, "velocity length mismatch");
  if (!(s.t >= 0.0 && s.t <= 1.0)) fail(ErrorCode::Domain, "flow time must lie in [0, 1]");
  EndpointEstimates e{std::vector<double>(v.size()), std::vector<double>(v.size())};
  for (std::size_t i = 0; i < v.size(); ++i) {
    e.z0_hat[i] = s.z[i] - s.t * v[i];
    e.z1_hat[i] = s.z[i] + (1.0 - s.t) * v[i];
  }
  return e;
}

std::vector<double> integrate_flow(const VelocityField& v, std::span<const double> z_start,
                                   double t_start, double t_end, std::size_t n_steps,
                                   FlowScheme scheme) {
  if (n_steps < 1) fail(ErrorCode::InvalidArgument, "flow integration needs at least one step");
  if (z_start.size() != v.dim()) fail(ErrorCode::DimensionMismatch, "start state has wrong length");
  const double dt = (t_end - t_start) / static_cast<double>(n_steps);
  std::vector<double> z(z_start.begin(), z_start.end());
  std::vector<double> trial(z.size());
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t = t_start + static_cast<double>(k) * dt;
    const std::vector<double> v0 = v.evaluate(z, t);
    if (scheme == FlowScheme::Euler) {
      for (std::size_t i = 0; i < z.size(); ++i) z[i] += dt * v0[i];
      continue;
    }
    for (std::size_t i = 0; i < z.size(); ++i) trial[i] = z[i] + dt * v0[i];
    const std::vector<double> v1 = v.evaluate(trial, t + dt);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += 0.5 * dt * (v0[i] + v1[i]);
  }
  return z;
}

}  // namespace geoinv
