#include "vrae/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "vrae/dataset.hpp"

namespace vrae::plot {
namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 520.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 150.0;
constexpr double kTop = 30.0;
constexpr double kBottom = 60.0;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
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

}  // namespace

std::string_view class_color(int label) {
  switch (label) {
    case 0: return "red";
    case 1: return "blue";
    case 2: return "green";
    case 3: return "black";
    default: return "gray";
  }
}

std::string scatter_svg(const Matrix& points, std::span<const int> labels, std::string_view method) {
  if (points.rows() == 0) throw InvalidArgument("plot: empty embedding");
  if (points.cols() < 2) throw InvalidArgument("plot: need two coordinates per point");
  if (static_cast<std::size_t>(points.rows()) != labels.size())
    throw InvalidArgument("plot: " + std::to_string(points.rows()) + " points but " +
                          std::to_string(labels.size()) + " labels");
  if (!all_finite(points)) throw InvalidArgument("plot: non-finite coordinates");

  const auto xy = points.leftCols(2);
  const Eigen::Array2d lo = xy.colwise().minCoeff().transpose();
  const Eigen::Array2d hi = xy.colwise().maxCoeff().transpose();
  const Eigen::Array2d span = (hi - lo).max(1e-12);
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + 10.0 + (v - lo(0)) / span(0) * (plot_w - 20.0); };
  auto py = [&](double v) { return kTop + plot_h - 10.0 - (v - lo(1)) / span(1) * (plot_h - 20.0); };

  const std::string name = escape(method);
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" + fmt(kHeight) +
         "\" viewBox=\"0 0 " + fmt(kWidth) + " " + fmt(kHeight) + "\" font-family=\"sans-serif\" font-size=\"13\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<rect x=\"" + fmt(kLeft) + "\" y=\"" + fmt(kTop) + "\" width=\"" + fmt(plot_w) + "\" height=\"" +
         fmt(plot_h) + "\" fill=\"none\" stroke=\"#444\"/>\n";
  svg += "<text class=\"axis-label\" x=\"" + fmt(kLeft + plot_w / 2) + "\" y=\"" + fmt(kHeight - 20) +
         "\" text-anchor=\"middle\">" + name + " 1</text>\n";
  svg += "<text class=\"axis-label\" x=\"20\" y=\"" + fmt(kTop + plot_h / 2) +
         "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " + fmt(kTop + plot_h / 2) + ")\">" + name +
         " 2</text>\n";

  svg += "<g class=\"points\">\n";
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    svg += "<circle cx=\"" + fmt(px(xy(i, 0))) + "\" cy=\"" + fmt(py(xy(i, 1))) + "\" r=\"3\" fill=\"" +
           std::string(class_color(label)) + "\" fill-opacity=\"0.75\"/>\n";
  }
  svg += "</g>\n";

  const std::set<int> classes(labels.begin(), labels.end());
  svg += "<g class=\"legend\">\n";
  double y = kTop + 15.0;
  for (int label : classes) {
    const double x = kWidth - kRight + 15.0;
    svg += "<g class=\"legend-entry\"><rect x=\"" + fmt(x) + "\" y=\"" + fmt(y - 9) +
           "\" width=\"10\" height=\"10\" fill=\"" + std::string(class_color(label)) + "\"/><text x=\"" +
           fmt(x + 16) + "\" y=\"" + fmt(y) + "\">" + escape(data::class_name(label)) + "</text></g>\n";
    y += 20.0;
  }
  svg += "</g>\n</svg>\n";
  return svg;
}

}  // namespace vrae::plot
