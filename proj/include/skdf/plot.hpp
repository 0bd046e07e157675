#pragma once

#include <map>
#include <string>
#include <vector>

#include "skdf/image.hpp"

namespace skdf {

struct PlotColor {
  double r = 0, g = 0, b = 0;
};

/// Minimal raster plotting: enough for loss curves, PR curves, metric
/// bars, and dataset histograms rendered straight to PNG-able images.
class PlotCanvas {
 public:
  PlotCanvas(int width, int height, PlotColor background = {1, 1, 1});

  int width() const { return canvas_.width; }
  int height() const { return canvas_.height; }

  void set_pixel(int x, int y, PlotColor c);
  void fill_rect(int x0, int y0, int x1, int y1, PlotColor c);
  void line(double x0, double y0, double x1, double y1, PlotColor c);
  /// 5x7 bitmap font, scaled by an integer factor; unknown glyphs render
  /// as a hollow box. Uppercase maps to lowercase.
  void text(int x, int y, const std::string& s, PlotColor c, int scale = 1);
  static int text_width(const std::string& s, int scale = 1);

  ImageU8 render() const { return canvas_.quantize(); }

 private:
  Canvas canvas_;
};

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Multi-series line chart with axes, tick labels, and a legend.
ImageU8 line_chart(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                   const std::string& y_label, int width = 900, int height = 540);

/// Labeled vertical bars (metric comparisons, histograms).
ImageU8 bar_chart(const std::vector<std::string>& labels, const std::vector<double>& values, const std::string& title,
                  const std::string& y_label, int width = 900, int height = 540);

/// Row-major heat grid rendering (center-position statistics).
ImageU8 heat_grid(const std::vector<int>& grid, int grid_size, const std::string& title, int width = 540,
                  int height = 540);

}  // namespace skdf
