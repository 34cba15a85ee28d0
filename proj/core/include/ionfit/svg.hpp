#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace ionfit::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

struct Axes {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
};

/// Self-contained SVG documents. Output depends only on the inputs.
std::string heatmap(const Eigen::MatrixXd& values, const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& col_labels, const std::string& title,
                    const std::string& row_axis = "trained on", const std::string& col_axis = "validated on");

std::string lines(const std::vector<Series>& series, const Axes& axes);

std::string scatter(const std::vector<Series>& series, const Axes& axes);

/// Shaded band between lower and upper with the centre line and, optionally, the truth.
std::string band(const std::vector<double>& t, const std::vector<double>& lower, const std::vector<double>& upper,
                 const std::vector<double>& center, const std::optional<std::vector<double>>& truth,
                 const Axes& axes);

}  // namespace ionfit::svg
