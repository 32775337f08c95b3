#pragma once

#include <string>
#include <vector>

namespace graphbandit {

struct PlotSeries {
  std::string label;
  std::vector<double> mean;
  std::vector<double> band;  // half-width of the shaded band, may be empty
};

struct PlotOptions {
  std::string title;
  std::string x_label = "t";
  std::string y_label;
  int width = 640;
  int height = 400;
};

// Static SVG line chart, x = 1..n, each series drawn over a translucent band.
std::string line_chart_svg(const std::vector<PlotSeries>& series, const PlotOptions& options);

}  // namespace graphbandit
