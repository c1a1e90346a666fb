#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace hiersteer {

struct PlotSeries {
  std::string name;
  std::vector<double> x, y;
};

/// Minimal SVG line chart with axes, tick labels, a legend and an optional
/// annotation line under the title.
std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<PlotSeries>& series, const std::string& annotation = "");

/// Writes CSV text from a header and equally long numeric columns.
std::string csv_columns(const std::vector<std::string>& header, const std::vector<std::vector<double>>& columns);

/// Parses CSV written by csv_columns back into columns (header skipped).
std::vector<std::vector<double>> parse_csv_columns(const std::string& text);

}  // namespace hiersteer
