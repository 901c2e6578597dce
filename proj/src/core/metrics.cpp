#include "geoinv/core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "geoinv/core/error.hpp"

namespace geoinv {

double rmse(std::span<const double> pred, std::span<const double> obs) {
  if (pred.size() != obs.size()) fail(ErrorCode::DimensionMismatch, "rmse: length mismatch");
  if (pred.empty()) fail(ErrorCode::InvalidArgument, "rmse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - obs[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(pred.size()));
}

std::string to_string(Rank r) {
  switch (r) {
    case Rank::Best: return "best";
    case Rank::Worst: return "worst";
    case Rank::Mixed: return "mixed";
  }
  return "mixed";
}

MetricsReport delta_rmse_and_ranks(std::span<const double> baseline,
                                   std::span<const MethodTable> methods) {
  if (methods.empty()) fail(ErrorCode::InvalidArgument, "metrics: no methods given");
  const std::size_t n_obs = baseline.size();
  if (n_obs == 0) fail(ErrorCode::InvalidArgument, "metrics: empty baseline table");
  std::set<std::string> seen;
  for (const MethodTable& m : methods) {
    if (m.rmse.size() != n_obs) {
      fail(ErrorCode::DimensionMismatch, "metrics: method '" + m.name + "' has a different observation count");
    }
    if (!seen.insert(m.name).second) fail(ErrorCode::InvalidArgument, "metrics: duplicate method '" + m.name + "'");
    for (double v : m.rmse) {
      if (!std::isfinite(v)) fail(ErrorCode::Numeric, "metrics: non-finite RMSE in '" + m.name + "'");
    }
  }
  for (double v : baseline) {
    if (!std::isfinite(v)) fail(ErrorCode::Numeric, "metrics: non-finite baseline RMSE");
  }

  const std::size_t n_m = methods.size();
  MetricsReport r;
  r.delta.assign(n_m, std::vector<double>(n_obs));
  r.ranks.assign(n_m, std::vector<Rank>(n_obs, Rank::Mixed));
  for (const MethodTable& m : methods) r.names.push_back(m.name);

  for (std::size_t o = 0; o < n_obs; ++o) {
    double lo = methods[0].rmse[o];
    double hi = lo;
    for (std::size_t k = 0; k < n_m; ++k) {
      lo = std::min(lo, methods[k].rmse[o]);
      hi = std::max(hi, methods[k].rmse[o]);
    }
    for (std::size_t k = 0; k < n_m; ++k) {
      const double v = methods[k].rmse[o];
      r.delta[k][o] = baseline[o] - v;
      if (v == lo) {
        r.ranks[k][o] = Rank::Best;
      } else if (v == hi) {
        r.ranks[k][o] = Rank::Worst;
      }
    }
  }
  const double denom = static_cast<double>(n_obs);
  for (std::size_t k = 0; k < n_m; ++k) {
    const auto count = [&](Rank want) {
      return static_cast<double>(std::count(r.ranks[k].begin(), r.ranks[k].end(), want)) / denom;
    };
    r.win_rate.push_back(count(Rank::Best));
    r.worst_rate.push_back(count(Rank::Worst));
    r.mixed_rate.push_back(count(Rank::Mixed));
  }
  return r;
}

}  // namespace geoinv
