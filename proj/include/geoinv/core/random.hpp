#pragma once

#include <cstdint>
#include <random>

namespace geoinv {

using Rng = std::mt19937_64;

// Standard normal draws from an owned engine. Every stochastic routine takes
// one of these (or a seed to build one); there is no global generator.
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : rng_(seed) {}

  double operator()() { return dist_(rng_); }
  Rng& engine() noexcept { return rng_; }

 private:
  Rng rng_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace geoinv
