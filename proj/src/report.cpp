#include "ctok/report.hpp"

#include "ctok/error.hpp"
#include "ctok/image.hpp"
#include "ctok/util.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace ctok {

namespace {

using Rgb = std::array<std::uint8_t, 3>;

// Dark blue through teal to yellow.
Rgb ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  constexpr std::array<std::array<double, 3>, 3> stops = {{{40, 30, 90}, {30, 150, 140}, {250, 230, 60}}};
  const double x = t * 2.0;
  const auto lo = static_cast<std::size_t>(std::min(1.0, std::floor(x)));
  const double f = x - static_cast<double>(lo);
  Rgb out{};
  for (int c = 0; c < 3; ++c) {
    out[c] = static_cast<std::uint8_t>(std::lround(stops[lo][c] + f * (stops[lo + 1][c] - stops[lo][c])));
  }
  return out;
}

void fill(Image& img, int x0, int y0, int x1, int y1, Rgb color) {
  for (int y = std::max(0, y0); y < std::min(img.height, y1); ++y) {
    for (int x = std::max(0, x0); x < std::min(img.width, x1); ++x) {
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = color[c];
    }
  }
}

void line(Image& img, int x0, int y0, int x1, int y1, Rgb color) {
  const int steps = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1});
  for (int i = 0; i <= steps; ++i) {
    const int x = x0 + (x1 - x0) * i / steps;
    const int y = y0 + (y1 - y0) * i / steps;
    fill(img, x, y, x + 2, y + 2, color);
  }
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

Image render_affinity(const AffinityReport& report, int cell) {
  const auto n = static_cast<int>(report.matrix.rows());
  if (n == 0 || cell < 1) throw Error(ErrorCode::InvalidArgument, "empty affinity matrix");
  Image img(n * cell, n * cell);
  const double span = 1.0 - report.clip_at;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double v = std::max(report.matrix(i, j), report.clip_at);
      fill(img, j * cell, i * cell, (j + 1) * cell, (i + 1) * cell, ramp(span > 0 ? (v - report.clip_at) / span : 1.0));
    }
  }
  return img;
}

Image render_norms(const NormReport& report, int bar_width, int height) {
  const auto bars = static_cast<int>(report.per_attribute_norms.size()) + 1;
  Image img(bars * (bar_width + 1) + 1, height, 255);
  double top = report.learned_token_norm;
  for (double v : report.per_attribute_norms) top = std::max(top, v);
  if (!(top > 0.0)) top = 1.0;
  auto bar = [&](int i, double v, Rgb color) {
    const int h = static_cast<int>(std::lround(v / top * (height - 2)));
    const int x = 1 + i * (bar_width + 1);
    fill(img, x, height - h, x + bar_width, height, color);
  };
  for (int i = 0; i + 1 < bars; ++i) bar(i, report.per_attribute_norms[static_cast<std::size_t>(i)], {90, 110, 170});
  bar(bars - 1, report.learned_token_norm, {210, 60, 50});
  const int mean_y = height - static_cast<int>(std::lround(report.mean / top * (height - 2)));
  fill(img, 0, mean_y, img.width, mean_y + 1, {0, 0, 0});
  return img;
}

Image render_curve(std::span<const double> xs, std::span<const double> ys, int width, int height) {
  if (xs.empty() || xs.size() != ys.size()) throw Error(ErrorCode::DimensionMismatch, "curve needs matching x and y");
  Image img(width, height, 255);
  const auto [xmin, xmax] = std::minmax_element(xs.begin(), xs.end());
  const auto [ymin, ymax] = std::minmax_element(ys.begin(), ys.end());
  const double xr = *xmax > *xmin ? *xmax - *xmin : 1.0;
  const double yr = *ymax > *ymin ? *ymax - *ymin : 1.0;
  const int pad = 6;
  auto px = [&](std::size_t i) {
    return std::pair{pad + static_cast<int>(std::lround((xs[i] - *xmin) / xr * (width - 2 * pad))),
                     height - pad - static_cast<int>(std::lround((ys[i] - *ymin) / yr * (height - 2 * pad)))};
  };
  fill(img, pad, height - pad, width - pad, height - pad + 1, {150, 150, 150});
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto [x, y] = px(i);
    fill(img, x - 2, y - 2, x + 3, y + 3, {30, 90, 200});
    if (i > 0) {
      const auto [x0, y0] = px(i - 1);
      line(img, x0, y0, x, y, {30, 90, 200});
    }
  }
  return img;
}

std::string affinity_csv(const AffinityReport& report) {
  std::ostringstream out;
  out.precision(9);
  out << "label";
  for (const auto& l : report.labels) out << "," << csv_field(l);
  out << "\n";
  for (Eigen::Index i = 0; i < report.matrix.rows(); ++i) {
    out << csv_field(report.labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < report.matrix.cols(); ++j) out << "," << report.matrix(i, j);
    out << "\n";
  }
  return out.str();
}

std::string norm_csv(const NormReport& report, const std::vector<std::string>& attributes) {
  if (attributes.size() != report.per_attribute_norms.size()) {
    throw Error(ErrorCode::DimensionMismatch, "attribute names and norms differ in length");
  }
  std::ostringstream out;
  out.precision(9);
  out << "name,norm\n";
  for (std::size_t i = 0; i < attributes.size(); ++i) out << csv_field(attributes[i]) << "," << report.per_attribute_norms[i] << "\n";
  out << "*," << report.learned_token_norm << "\n";
  return out.str();
}

std::string eval_table_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out.precision(9);
  out << "metric,value,std,queries\n";
  for (const auto& r : reports) {
    out << csv_field(r.metric) << "," << r.value << "," << r.std << "," << r.per_query.size() << "\n";
  }
  return out.str();
}

ReportFiles write_report(const std::filesystem::path& dir, const AffinityReport& affinity_report,
                         const NormReport& norms, const std::vector<std::string>& attributes,
                         const GairResult* gair) {
  std::filesystem::create_directories(dir);
  ReportFiles files;
  auto text = [&](const char* name, const std::string& body) {
    write_file_atomic(dir / name, body);
    files.written.push_back(dir / name);
  };
  auto png = [&](const char* name, const Image& img) {
    write_png(dir / name, img);
    files.written.push_back(dir / name);
  };
  png("affinity.png", render_affinity(affinity_report));
  text("affinity.csv", affinity_csv(affinity_report));
  png("norms.png", render_norms(norms));
  text("norms.csv", norm_csv(norms, attributes));
  if (gair) {
    png("gair_curve.png", render_curve(gair->weights, gair->scores));
    text("gair_curve.csv", gair_curve_csv(*gair));
  }
  return files;
}

}  // namespace ctok
