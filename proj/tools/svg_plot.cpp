#include "svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace vildistill::tools {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kMarginLeft = 70.0;
constexpr double kMarginRight = 20.0;
constexpr double kMarginTop = 40.0;
constexpr double kMarginBottom = 50.0;

const char* kPalette[] = {"#c0392b", "#2471a3", "#1e8449", "#8e44ad", "#b7950b"};

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

void write_line_plot_svg(const std::filesystem::path& file, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<PlotSeries>& series) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("plot series length mismatch");
    for (size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin) || !std::isfinite(ymin)) {
    throw std::invalid_argument("plot has no data points");
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const double plot_w = kWidth - kMarginLeft - kMarginRight;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  const auto sx = [&](double x) { return kMarginLeft + (x - xmin) / (xmax - xmin) * plot_w; };
  const auto sy = [&](double y) {
    return kMarginTop + plot_h - (y - ymin) / (ymax - ymin) * plot_h;
  };

  std::ofstream out(file, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write plot: " + file.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(kWidth) << "\" height=\""
      << fmt(kHeight) << "\" viewBox=\"0 0 " << fmt(kWidth) << " " << fmt(kHeight) << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << fmt(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";

  // Axes.
  out << "<line x1=\"" << fmt(kMarginLeft) << "\" y1=\"" << fmt(kMarginTop) << "\" x2=\""
      << fmt(kMarginLeft) << "\" y2=\"" << fmt(kMarginTop + plot_h)
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  out << "<line x1=\"" << fmt(kMarginLeft) << "\" y1=\"" << fmt(kMarginTop + plot_h)
      << "\" x2=\"" << fmt(kMarginLeft + plot_w) << "\" y2=\"" << fmt(kMarginTop + plot_h)
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";

  // Range labels.
  out << "<text x=\"" << fmt(kMarginLeft) << "\" y=\"" << fmt(kHeight - 14)
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(xmin) << "</text>\n";
  out << "<text x=\"" << fmt(kMarginLeft + plot_w) << "\" y=\"" << fmt(kHeight - 14)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(xmax)
      << "</text>\n";
  out << "<text x=\"" << fmt(kMarginLeft - 6) << "\" y=\"" << fmt(kMarginTop + plot_h)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(ymin)
      << "</text>\n";
  out << "<text x=\"" << fmt(kMarginLeft - 6) << "\" y=\"" << fmt(kMarginTop + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(ymax)
      << "</text>\n";
  out << "<text x=\"" << fmt(kMarginLeft + plot_w / 2) << "\" y=\"" << fmt(kHeight - 14)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << fmt(kMarginTop + plot_h / 2)
      << "\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 "
      << fmt(kMarginTop + plot_h / 2) << ")\" text-anchor=\"middle\">" << y_label << "</text>\n";

  for (size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < series[s].x.size(); ++i) {
      if (i > 0) out << " ";
      out << fmt(sx(series[s].x[i])) << "," << fmt(sy(series[s].y[i]));
    }
    out << "\"/>\n";
    out << "<text x=\"" << fmt(kMarginLeft + plot_w - 4) << "\" y=\""
        << fmt(kMarginTop + 16 + 16 * static_cast<double>(s))
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << color
        << "\">" << series[s].name << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace vildistill::tools
