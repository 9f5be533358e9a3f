#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace graphprobe::cli {

/// Writes `content` to `path` through a temporary file and a rename.
void write_text(const std::filesystem::path& path, std::string_view content);
std::string read_text(const std::filesystem::path& path);

/// Minimal CSV table: header plus rows of already-formatted cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string str() const;
};
CsvTable read_csv(const std::filesystem::path& path);

/// Shortest round-trip decimal form, or "NA" for non-finite values.
std::string format_number(double v);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
};

/// Self-contained SVG line chart with markers and a legend.
std::string line_chart_svg(const PlotSpec& spec, const std::vector<PlotSeries>& series);

}  // namespace graphprobe::cli
