#include "cli/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "swinvrnn/errors.hpp"

namespace swinvrnn::cli {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string rgb(double r, double g, double b) {
  char buf[16];
  auto c = [](double x) { return static_cast<int>(std::lround(std::clamp(x, 0.0, 1.0) * 255)); };
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c(r), c(g), c(b));
  return buf;
}

// t in [-1, 1]: blue, white, red.
std::string diverging_color(double t) {
  t = std::clamp(t, -1.0, 1.0);
  return t < 0 ? rgb(1 + t, 1 + t, 1) : rgb(1, 1 - t, 1 - t);
}

// t in [0, 1]: pale yellow to dark blue.
std::string sequential_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return rgb(1.0 - 0.9 * t, 1.0 - 0.7 * t, 0.8 - 0.4 * t);
}

std::string header(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(kWidth) + "\" height=\"" + px(kHeight) +
         "\" viewBox=\"0 0 " + px(kWidth) + " " + px(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" + "<text x=\"" + px(kWidth / 2) +
         "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) + "</text>\n";
}

}  // namespace

std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ShapeError("series '" + s.label + "' has mismatched x and y");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream os;
  os << header(title);
  os << "<rect x=\"" << px(kLeft) << "\" y=\"" << px(kTop) << "\" width=\"" << px(pw) << "\" height=\"" << px(ph)
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    os << "<text x=\"" << px(sx(xv)) << "\" y=\"" << px(kTop + ph + 16) << "\" text-anchor=\"middle\">" << num(xv)
       << "</text>\n";
    os << "<text x=\"" << px(kLeft - 6) << "\" y=\"" << px(sy(yv) + 4) << "\" text-anchor=\"end\">" << num(yv)
       << "</text>\n";
    os << "<line x1=\"" << px(kLeft) << "\" x2=\"" << px(kLeft + pw) << "\" y1=\"" << px(sy(yv)) << "\" y2=\""
       << px(sy(yv)) << "\" stroke=\"#ddd\"/>\n";
  }
  os << "<text x=\"" << px(kLeft + pw / 2) << "\" y=\"" << px(kHeight - 10) << "\" text-anchor=\"middle\">"
     << escape(x_label) << "</text>\n";
  os << "<text transform=\"translate(16," << px(kTop + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(y_label) << "</text>\n";
  int legend = 0;
  for (const auto& s : series) {
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"" << px(s.width)
       << "\" stroke-opacity=\"" << num(s.opacity) << "\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(s.y[i])) os << px(sx(s.x[i])) << "," << px(sy(s.y[i])) << " ";
    }
    os << "\"/>\n";
    if (!s.label.empty()) {
      const double ly = kTop + 10 + 18 * legend++;
      os << "<line x1=\"" << px(kLeft + pw + 10) << "\" x2=\"" << px(kLeft + pw + 30) << "\" y1=\"" << px(ly)
         << "\" y2=\"" << px(ly) << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
      os << "<text x=\"" << px(kLeft + pw + 34) << "\" y=\"" << px(ly + 4) << "\">" << escape(s.label) << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

std::string heatmap(const std::string& title, const std::vector<double>& values, int rows, int cols,
                    bool diverging) {
  if (rows < 1 || cols < 1 || values.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw ShapeError("heatmap needs rows * cols values");
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!std::isfinite(lo)) lo = hi = 0.0;
  const double absmax = std::max(std::abs(lo), std::abs(hi));
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const double cw = pw / cols, ch = ph / rows;
  std::ostringstream os;
  os << header(title);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double v = values[static_cast<std::size_t>(r) * cols + c];
      std::string fill = "#888888";
      if (std::isfinite(v)) {
        fill = diverging ? diverging_color(absmax > 0 ? v / absmax : 0.0)
                         : sequential_color(hi > lo ? (v - lo) / (hi - lo) : 0.0);
      }
      os << "<rect x=\"" << px(kLeft + c * cw) << "\" y=\"" << px(kTop + r * ch) << "\" width=\"" << px(cw + 0.3)
         << "\" height=\"" << px(ch + 0.3) << "\" fill=\"" << fill << "\"/>\n";
    }
  }
  // Colour bar.
  const double bx = kLeft + pw + 20;
  for (int i = 0; i < 50; ++i) {
    const double t = 1.0 - i / 49.0;
    const auto fill = diverging ? diverging_color(2 * t - 1) : sequential_color(t);
    os << "<rect x=\"" << px(bx) << "\" y=\"" << px(kTop + i * ph / 50) << "\" width=\"16\" height=\""
       << px(ph / 50 + 0.3) << "\" fill=\"" << fill << "\"/>\n";
  }
  const double top = diverging ? absmax : hi, bottom = diverging ? -absmax : lo;
  os << "<text x=\"" << px(bx + 22) << "\" y=\"" << px(kTop + 10) << "\">" << num(top) << "</text>\n";
  os << "<text x=\"" << px(bx + 22) << "\" y=\"" << px(kTop + ph) << "\">" << num(bottom) << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::vector<double> zero_diagonal(std::vector<double> matrix, int n) {
  if (n < 0 || matrix.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n)) {
    throw ShapeError("zero_diagonal needs an n x n matrix");
  }
  for (int i = 0; i < n; ++i) matrix[static_cast<std::size_t>(i) * n + i] = 0.0;
  return matrix;
}

}  // namespace swinvrnn::cli
