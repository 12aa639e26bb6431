#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "ubpl/io.hpp"
#include "ubpl/trainer.hpp"

namespace ubpl {
namespace {

std::string f2(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string g4(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace

void plot_metric(const std::vector<std::string>& metrics_files,
                 const std::string& metric, const std::string& out_svg) {
  if (metrics_files.empty())
    throw ConfigError("plot needs at least one metrics file");

  struct Series {
    std::string label;
    std::vector<std::pair<double, double>> pts;  // (epoch, value)
  };
  std::vector<Series> series;
  for (const auto& file : metrics_files) {
    Series s;
    for (const auto& r : read_metrics(file)) {
      if (r.metric != metric) continue;
      if (s.label.empty()) s.label = r.run_id;
      s.pts.emplace_back(static_cast<double>(r.epoch), r.value);
    }
    if (s.pts.empty())
      throw ConfigError("metric '" + metric + "' does not appear in " + file);
    series.push_back(std::move(s));
  }

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
  double y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (auto [x, y] : s.pts) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (x0 == x1) {
    x0 -= 1;
    x1 += 1;
  }
  if (y0 == y1) {
    y0 -= 1;
    y1 += 1;
  } else {
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
  }

  const double W = 720, H = 440, L = 64, T = 30, R = 704, B = 396;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (R - L); };
  auto py = [&](double y) { return B - (y - y0) / (y1 - y0) * (B - T); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                 "#9467bd", "#8c564b", "#e377c2"};
  const int ncolors = 6;

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f2(W) +
         "\" height=\"" + f2(H) + "\" viewBox=\"0 0 " + f2(W) + " " + f2(H) +
         "\">\n";
  svg += "<rect width=\"" + f2(W) + "\" height=\"" + f2(H) +
         "\" fill=\"#ffffff\"/>\n";
  svg += "<text x=\"" + f2(W / 2) +
         "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\">" +
         metric + "</text>\n";

  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5.0;
    const double yv = y0 + (y1 - y0) * i / 5.0;
    const double gx = px(xv), gy = py(yv);
    svg += "<line x1=\"" + f2(gx) + "\" y1=\"" + f2(T) + "\" x2=\"" + f2(gx) +
           "\" y2=\"" + f2(B) + "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg += "<line x1=\"" + f2(L) + "\" y1=\"" + f2(gy) + "\" x2=\"" + f2(R) +
           "\" y2=\"" + f2(gy) + "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + f2(gx) + "\" y=\"" + f2(B + 16) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">" +
           g4(xv) + "</text>\n";
    svg += "<text x=\"" + f2(L - 6) + "\" y=\"" + f2(gy + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">" +
           g4(yv) + "</text>\n";
  }
  svg += "<line x1=\"" + f2(L) + "\" y1=\"" + f2(B) + "\" x2=\"" + f2(R) +
         "\" y2=\"" + f2(B) + "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
  svg += "<line x1=\"" + f2(L) + "\" y1=\"" + f2(T) + "\" x2=\"" + f2(L) +
         "\" y2=\"" + f2(B) + "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";

  for (size_t i = 0; i < series.size(); ++i) {
    std::string pts;
    for (auto [x, y] : series[i].pts)
      pts += f2(px(x)) + "," + f2(py(y)) + " ";
    if (!pts.empty()) pts.pop_back();
    svg += std::string("<polyline fill=\"none\" stroke=\"") +
           colors[i % ncolors] + "\" stroke-width=\"1.5\" points=\"" + pts +
           "\"/>\n";
  }

  for (size_t i = 0; i < series.size(); ++i) {
    const double ly = T + 10 + 18.0 * static_cast<double>(i);
    svg += std::string("<rect x=\"") + f2(L + 10) + "\" y=\"" + f2(ly) +
           "\" width=\"10\" height=\"10\" fill=\"" + colors[i % ncolors] +
           "\"/>\n";
    svg += "<text x=\"" + f2(L + 26) + "\" y=\"" + f2(ly + 9) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" +
           series[i].label + "</text>\n";
  }
  svg += "</svg>\n";

  std::ofstream out(out_svg, std::ios::trunc | std::ios::binary);
  if (!out) throw ConfigError("cannot write " + out_svg);
  out << svg;
}

}  // namespace ubpl
