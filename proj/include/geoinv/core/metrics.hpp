#pragma once

#include <span>
#include <string>
#include <vector>

namespace geoinv {

double rmse(std::span<const double> pred, std::span<const double> obs);

enum class Rank { Best, Worst, Mixed };

std::string to_string(Rank r);

struct MethodTable {
  std::string name;
  std::vector<double> rmse;  // one entry per observation
};

/// Per-observation comparison of methods against a baseline for one metric.
/// Ranks are taken among the listed methods only: minimal RMSE is best,
/// maximal is worst, anything else mixed. Ties at the minimum are all best
/// (also when every method ties); ties at the maximum are all worst.
struct MetricsReport {
  std::vector<std::string> names;
  std::vector<std::vector<double>> delta;  // [method][obs] = baseline - method
  std::vector<std::vector<Rank>> ranks;    // [method][obs]
  std::vector<double> win_rate;            // fraction of observations ranked best
  std::vector<double> worst_rate;
  std::vector<double> mixed_rate;
};

MetricsReport delta_rmse_and_ranks(std::span<const double> baseline,
                                   std::span<const MethodTable> methods);

}  // namespace geoinv
