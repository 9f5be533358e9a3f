#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace graphprobe {

/// Regression quality of predicted against true normalized perplexity.
/// Correlations and R^2 are empty when undefined (constant labels or
/// constant predictions).
struct MetricsReport {
  double mse = 0.0;
  double mae = 0.0;
  std::optional<double> r2;
  std::optional<double> pearson;
  std::optional<double> spearman;
  std::size_t count = 0;
};

MetricsReport regression_metrics(std::span<const double> predictions, std::span<const double> labels);

std::optional<double> pearson_correlation(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of average ranks.
std::optional<double> spearman_correlation(std::span<const double> x, std::span<const double> y);
/// 1-based ranks with ties sharing their mean rank.
std::vector<double> average_ranks(std::span<const double> values);

/// Header row and one data row. Numbers use the shortest round-trip form;
/// undefined values are written as "NA".
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& report);

}  // namespace graphprobe
