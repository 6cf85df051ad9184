#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace vildistill::tools {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Minimal deterministic SVG line plot (fixed layout, fixed palette,
/// %.6g number formatting) so repeated renders are byte-identical.
void write_line_plot_svg(const std::filesystem::path& file, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<PlotSeries>& series);

}  // namespace vildistill::tools
