#include "graphprobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <numeric>

#include "graphprobe/errors.hpp"

namespace graphprobe {

std::optional<double> pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw UsageError("pearson: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw UsageError("spearman: length mismatch");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson_correlation(rx, ry);
}

MetricsReport regression_metrics(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size()) throw UsageError("metrics: length mismatch");
  if (labels.empty()) throw DataError("metrics: empty evaluation set");
  MetricsReport r;
  r.count = labels.size();
  const double n = static_cast<double>(labels.size());
  const double mean_label = std::accumulate(labels.begin(), labels.end(), 0.0) / n;
  double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double e = predictions[i] - labels[i];
    ss_res += e * e;
    abs_sum += std::fabs(e);
    const double c = labels[i] - mean_label;
    ss_tot += c * c;
  }
  r.mse = ss_res / n;
  r.mae = abs_sum / n;
  if (ss_tot > 0.0) r.r2 = 1.0 - ss_res / ss_tot;
  r.pearson = pearson_correlation(predictions, labels);
  r.spearman = spearman_correlation(predictions, labels);
  return r;
}

std::string metrics_csv_header() { return "count,mse,mae,r2,pearson,spearman"; }

std::string metrics_csv_row(const MetricsReport& report) {
  auto fmt = [](std::optional<double> v) {
    if (!v) return std::string("NA");
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, *v);
    return std::string(buf, res.ptr);
  };
  return std::to_string(report.count) + "," + fmt(report.mse) + "," + fmt(report.mae) + "," +
         fmt(report.r2) + "," + fmt(report.pearson) + "," + fmt(report.spearman);
}

}  // namespace graphprobe
