#include "ionfit/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string_view>

namespace ionfit::svg {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 160.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string header(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string text(double x, double y, std::string_view s, std::string_view anchor = "middle", double rotate = 0.0) {
  std::string out = "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + std::string(anchor) + "\"";
  if (rotate != 0.0) out += " transform=\"rotate(" + num(rotate) + " " + num(x) + " " + num(y) + ")\"";
  return out + ">" + escape(s) + "</text>\n";
}

struct Scale {
  double lo = 0.0;
  double hi = 1.0;
  bool log = false;
  double pix_lo = 0.0;
  double pix_hi = 1.0;

  double tf(double v) const { return log ? std::log10(v) : v; }
  double operator()(double v) const { return pix_lo + (tf(v) - lo) / (hi - lo) * (pix_hi - pix_lo); }
};

Scale make_scale(double lo, double hi, bool log, double pix_lo, double pix_hi) {
  Scale s;
  s.log = log;
  s.pix_lo = pix_lo;
  s.pix_hi = pix_hi;
  if (log) {
    lo = std::log10(std::max(lo, std::numeric_limits<double>::min()));
    hi = std::log10(std::max(hi, std::numeric_limits<double>::min()));
  }
  if (!(hi > lo)) {
    const double pad = lo == 0.0 ? 1.0 : 0.05 * std::abs(lo);
    lo -= pad;
    hi += pad;
  } else {
    const double pad = 0.04 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  s.lo = lo;
  s.hi = hi;
  return s;
}

void extent(const std::vector<double>& v, bool log, double& lo, double& hi) {
  for (double x : v) {
    if (!std::isfinite(x) || (log && !(x > 0.0))) continue;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
}

std::string frame(const Scale& sx, const Scale& sy, const Axes& axes) {
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;
  std::string out = "<rect x=\"" + num(x0) + "\" y=\"" + num(y1) + "\" width=\"" + num(x1 - x0) + "\" height=\"" +
                    num(y0 - y1) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = sx.lo + (sx.hi - sx.lo) * k / 4.0;
    const double px = x0 + (x1 - x0) * k / 4.0;
    out += "<line x1=\"" + num(px) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(px) + "\" y2=\"" + num(y0 + 5) +
           "\" stroke=\"black\"/>\n";
    out += text(px, y0 + 18, tick_label(sx.log ? std::pow(10.0, fx) : fx));
    const double fy = sy.lo + (sy.hi - sy.lo) * k / 4.0;
    const double py = y0 + (y1 - y0) * k / 4.0;
    out += "<line x1=\"" + num(x0 - 5) + "\" y1=\"" + num(py) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(py) +
           "\" stroke=\"black\"/>\n";
    out += text(x0 - 8, py + 4, tick_label(sy.log ? std::pow(10.0, fy) : fy), "end");
  }
  out += text((x0 + x1) / 2, kHeight - 15, axes.x_label);
  out += text(20, (y0 + y1) / 2, axes.y_label, "middle", -90.0);
  out += text(kWidth / 2, 22, axes.title);
  return out;
}

std::string legend(const std::vector<std::string>& labels, bool markers) {
  std::string out;
  const double x = kWidth - kRight + 15;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = kTop + 10 + 18.0 * static_cast<double>(i);
    const char* colour = kPalette[i % 10];
    if (markers) {
      out += "<circle cx=\"" + num(x + 8) + "\" cy=\"" + num(y) + "\" r=\"4\" fill=\"" + colour + "\"/>\n";
    } else {
      out += "<line x1=\"" + num(x) + "\" y1=\"" + num(y) + "\" x2=\"" + num(x + 16) + "\" y2=\"" + num(y) +
             "\" stroke=\"" + colour + "\" stroke-width=\"2\"/>\n";
    }
    out += text(x + 22, y + 4, labels[i], "start");
  }
  return out;
}

std::string polyline(const std::vector<double>& x, const std::vector<double>& y, const Scale& sx, const Scale& sy,
                     const char* colour, bool dashed, double width = 1.5) {
  std::string pts;
  const std::size_t n = std::min(x.size(), y.size());
  pts.reserve(n * 16);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) continue;
    if ((sx.log && !(x[i] > 0.0)) || (sy.log && !(y[i] > 0.0))) continue;
    pts += num(sx(x[i])) + "," + num(sy(y[i])) + " ";
  }
  std::string out = "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"" + num(width) +
                    "\"";
  if (dashed) out += " stroke-dasharray=\"6,4\"";
  return out + " points=\"" + pts + "\"/>\n";
}

struct Frame {
  Scale sx;
  Scale sy;
};

Frame fit_frame(const std::vector<Series>& series, const Axes& axes) {
  double xlo = HUGE_VAL, xhi = -HUGE_VAL, ylo = HUGE_VAL, yhi = -HUGE_VAL;
  for (const auto& s : series) {
    extent(s.x, axes.log_x, xlo, xhi);
    extent(s.y, axes.log_y, ylo, yhi);
  }
  if (xlo > xhi) xlo = xhi = axes.log_x ? 1.0 : 0.0;
  if (ylo > yhi) ylo = yhi = axes.log_y ? 1.0 : 0.0;
  return {make_scale(xlo, xhi, axes.log_x, kLeft, kWidth - kRight),
          make_scale(ylo, yhi, axes.log_y, kHeight - kBottom, kTop)};
}

}  // namespace

std::string heatmap(const Eigen::MatrixXd& values, const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& col_labels, const std::string& title, const std::string& row_axis,
                    const std::string& col_axis) {
  const double cell = 64.0;
  const double left = 110.0;
  const double top = 60.0;
  const auto rows = values.rows();
  const auto cols = values.cols();
  const double w = left + cell * static_cast<double>(cols) + 40.0;
  const double h = top + cell * static_cast<double>(rows) + 60.0;
  double lo = HUGE_VAL, hi = -HUGE_VAL;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double v = values.data()[i];
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  std::string out = header(std::max(w, 300.0), h);
  out += text(std::max(w, 300.0) / 2, 22, title);
  out += text(left + cell * static_cast<double>(cols) / 2, 44, col_axis);
  out += text(18, top + cell * static_cast<double>(rows) / 2, row_axis, "middle", -90.0);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double v = values(r, c);
      const double f = (std::isfinite(v) && hi > lo) ? (v - lo) / (hi - lo) : 0.0;
      // White (low) to dark red (high).
      const int g = static_cast<int>(std::lround(255.0 * (1.0 - f)));
      const int red = static_cast<int>(std::lround(255.0 - 80.0 * f));
      char colour[16];
      std::snprintf(colour, sizeof colour, "#%02x%02x%02x", red, g, g);
      const double x = left + cell * static_cast<double>(c);
      const double y = top + cell * static_cast<double>(r);
      out += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(cell) + "\" height=\"" + num(cell) +
             "\" fill=\"" + colour + "\" stroke=\"#444\"/>\n";
      char label[32];
      std::snprintf(label, sizeof label, "%.3g", v);
      out += text(x + cell / 2, y + cell / 2 + 4, label);
    }
  }
  for (Eigen::Index r = 0; r < rows && static_cast<std::size_t>(r) < row_labels.size(); ++r) {
    out += text(left - 8, top + cell * (static_cast<double>(r) + 0.5) + 4, row_labels[static_cast<std::size_t>(r)], "end");
  }
  for (Eigen::Index c = 0; c < cols && static_cast<std::size_t>(c) < col_labels.size(); ++c) {
    out += text(left + cell * (static_cast<double>(c) + 0.5), top + cell * static_cast<double>(rows) + 18,
                col_labels[static_cast<std::size_t>(c)]);
  }
  return out + "</svg>\n";
}

std::string lines(const std::vector<Series>& series, const Axes& axes) {
  const Frame f = fit_frame(series, axes);
  std::string out = header(kWidth, kHeight) + frame(f.sx, f.sy, axes);
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < series.size(); ++i) {
    out += polyline(series[i].x, series[i].y, f.sx, f.sy, kPalette[i % 10], series[i].dashed);
    labels.push_back(series[i].label);
  }
  return out + legend(labels, false) + "</svg>\n";
}

std::string scatter(const std::vector<Series>& series, const Axes& axes) {
  const Frame f = fit_frame(series, axes);
  std::string out = header(kWidth, kHeight) + frame(f.sx, f.sy, axes);
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      if ((axes.log_x && !(s.x[k] > 0.0)) || (axes.log_y && !(s.y[k] > 0.0))) continue;
      out += "<circle cx=\"" + num(f.sx(s.x[k])) + "\" cy=\"" + num(f.sy(s.y[k])) + "\" r=\"3\" fill=\"" +
             kPalette[i % 10] + "\" fill-opacity=\"0.7\"/>\n";
    }
    labels.push_back(s.label);
  }
  return out + legend(labels, true) + "</svg>\n";
}

std::string band(const std::vector<double>& t, const std::vector<double>& lower, const std::vector<double>& upper,
                 const std::vector<double>& center, const std::optional<std::vector<double>>& truth,
                 const Axes& axes) {
  std::vector<Series> all = {{"upper", t, upper}, {"lower", t, lower}};
  if (truth) all.push_back({"truth", t, *truth});
  const Frame f = fit_frame(all, axes);
  std::string out = header(kWidth, kHeight) + frame(f.sx, f.sy, axes);
  std::string pts;
  for (std::size_t i = 0; i < t.size(); ++i) pts += num(f.sx(t[i])) + "," + num(f.sy(upper[i])) + " ";
  for (std::size_t i = t.size(); i-- > 0;) pts += num(f.sx(t[i])) + "," + num(f.sy(lower[i])) + " ";
  out += "<polygon fill=\"#9ecae1\" fill-opacity=\"0.6\" stroke=\"none\" points=\"" + pts + "\"/>\n";
  std::vector<std::string> labels = {"centre"};
  out += polyline(t, center, f.sx, f.sy, kPalette[0], true, 1.0);
  if (truth) {
    out += polyline(t, *truth, f.sx, f.sy, kPalette[1], false, 1.0);
    labels.push_back("truth");
  }
  return out + legend(labels, false) + "</svg>\n";
}

}  // namespace ionfit::svg
