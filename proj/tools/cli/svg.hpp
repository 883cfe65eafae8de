#pragma once

#include <string>
#include <vector>

namespace swinvrnn::cli {

struct Series {
  std::string label;  // empty: left out of the legend
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  double width = 1.5;
  double opacity = 1.0;
};

// Standalone SVG documents.
std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series);
// Row-major values; row 0 is drawn at the top. A diverging palette centred
// on zero when `diverging`, else a sequential one from the minimum.
std::string heatmap(const std::string& title, const std::vector<double>& values, int rows, int cols,
                    bool diverging);

// Copy of an n x n matrix with its diagonal set to zero.
std::vector<double> zero_diagonal(std::vector<double> matrix, int n);

}  // namespace swinvrnn::cli
