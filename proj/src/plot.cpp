#include "skdf/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

namespace skdf {

namespace {

using Glyph = std::array<const char*, 7>;

const std::map<char, Glyph>& font() {
  static const std::map<char, Glyph> table = {
      {' ', {"00000", "00000", "00000", "00000", "00000", "00000", "00000"}},
      {'0', {"01110", "10001", "10011", "10101", "11001", "10001", "01110"}},
      {'1', {"00100", "01100", "00100", "00100", "00100", "00100", "01110"}},
      {'2', {"01110", "10001", "00001", "00010", "00100", "01000", "11111"}},
      {'3', {"11110", "00001", "00001", "01110", "00001", "00001", "11110"}},
      {'4', {"00010", "00110", "01010", "10010", "11111", "00010", "00010"}},
      {'5', {"11111", "10000", "11110", "00001", "00001", "10001", "01110"}},
      {'6', {"00110", "01000", "10000", "11110", "10001", "10001", "01110"}},
      {'7', {"11111", "00001", "00010", "00100", "01000", "01000", "01000"}},
      {'8', {"01110", "10001", "10001", "01110", "10001", "10001", "01110"}},
      {'9', {"01110", "10001", "10001", "01111", "00001", "00010", "01100"}},
      {'.', {"00000", "00000", "00000", "00000", "00000", "01100", "01100"}},
      {',', {"00000", "00000", "00000", "00000", "01100", "00100", "01000"}},
      {'-', {"00000", "00000", "00000", "11111", "00000", "00000", "00000"}},
      {'+', {"00000", "00100", "00100", "11111", "00100", "00100", "00000"}},
      {'_', {"00000", "00000", "00000", "00000", "00000", "00000", "11111"}},
      {':', {"00000", "01100", "01100", "00000", "01100", "01100", "00000"}},
      {'/', {"00001", "00010", "00100", "00100", "00100", "01000", "10000"}},
      {'%', {"11001", "11010", "00010", "00100", "01000", "01011", "10011"}},
      {'(', {"00010", "00100", "01000", "01000", "01000", "00100", "00010"}},
      {')', {"01000", "00100", "00010", "00010", "00010", "00100", "01000"}},
      {'=', {"00000", "00000", "11111", "00000", "11111", "00000", "00000"}},
      {'a', {"00000", "00000", "01110", "00001", "01111", "10001", "01111"}},
      {'b', {"10000", "10000", "11110", "10001", "10001", "10001", "11110"}},
      {'c', {"00000", "00000", "01110", "10000", "10000", "10001", "01110"}},
      {'d', {"00001", "00001", "01111", "10001", "10001", "10001", "01111"}},
      {'e', {"00000", "00000", "01110", "10001", "11111", "10000", "01110"}},
      {'f', {"00110", "01001", "01000", "11100", "01000", "01000", "01000"}},
      {'g', {"00000", "01111", "10001", "10001", "01111", "00001", "01110"}},
      {'h', {"10000", "10000", "11110", "10001", "10001", "10001", "10001"}},
      {'i', {"00100", "00000", "01100", "00100", "00100", "00100", "01110"}},
      {'j', {"00010", "00000", "00110", "00010", "00010", "10010", "01100"}},
      {'k', {"10000", "10000", "10010", "10100", "11000", "10100", "10010"}},
      {'l', {"01100", "00100", "00100", "00100", "00100", "00100", "01110"}},
      {'m', {"00000", "00000", "11010", "10101", "10101", "10101", "10101"}},
      {'n', {"00000", "00000", "11110", "10001", "10001", "10001", "10001"}},
      {'o', {"00000", "00000", "01110", "10001", "10001", "10001", "01110"}},
      {'p', {"00000", "00000", "11110", "10001", "11110", "10000", "10000"}},
      {'q', {"00000", "00000", "01111", "10001", "01111", "00001", "00001"}},
      {'r', {"00000", "00000", "10110", "11001", "10000", "10000", "10000"}},
      {'s', {"00000", "00000", "01111", "10000", "01110", "00001", "11110"}},
      {'t', {"01000", "01000", "11100", "01000", "01000", "01001", "00110"}},
      {'u', {"00000", "00000", "10001", "10001", "10001", "10011", "01101"}},
      {'v', {"00000", "00000", "10001", "10001", "10001", "01010", "00100"}},
      {'w', {"00000", "00000", "10101", "10101", "10101", "10101", "01010"}},
      {'x', {"00000", "00000", "10001", "01010", "00100", "01010", "10001"}},
      {'y', {"00000", "00000", "10001", "10001", "01111", "00001", "01110"}},
      {'z', {"00000", "00000", "11111", "00010", "00100", "01000", "11111"}},
  };
  return table;
}

const Glyph& glyph_for(char c) {
  static const Glyph box = {"11111", "10001", "10001", "10001", "10001", "10001", "11111"};
  const char lower = (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
  auto it = font().find(lower);
  return it == font().end() ? box : it->second;
}

std::string format_tick(double v) {
  char buf[32];
  const double a = std::fabs(v);
  if (v == 0.0)
    std::snprintf(buf, sizeof buf, "0");
  else if (a >= 1000.0 || a < 0.01)
    std::snprintf(buf, sizeof buf, "%.1e", v);
  else
    std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

const std::array<PlotColor, 8> kPalette{{{0.85, 0.25, 0.2},
                                         {0.2, 0.45, 0.85},
                                         {0.15, 0.65, 0.3},
                                         {0.85, 0.65, 0.15},
                                         {0.55, 0.3, 0.75},
                                         {0.15, 0.65, 0.65},
                                         {0.65, 0.45, 0.25},
                                         {0.4, 0.4, 0.4}}};

struct Frame {
  int x0, y0, x1, y1;  // plot area in pixels
  double xmin, xmax, ymin, ymax;

  double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * (x1 - x0); }
  double py(double y) const { return y1 - (y - ymin) / (ymax - ymin) * (y1 - y0); }
};

void draw_frame(PlotCanvas& canvas, const Frame& f, const std::string& title, const std::string& x_label,
                const std::string& y_label) {
  const PlotColor axis{0.25, 0.25, 0.25};
  canvas.line(f.x0, f.y0, f.x0, f.y1, axis);
  canvas.line(f.x0, f.y1, f.x1, f.y1, axis);
  canvas.text((f.x0 + f.x1) / 2 - PlotCanvas::text_width(title, 2) / 2, 8, title, axis, 2);
  canvas.text((f.x0 + f.x1) / 2 - PlotCanvas::text_width(x_label) / 2, f.y1 + 28, x_label, axis);
  canvas.text(6, f.y0 - 14, y_label, axis);

  for (int k = 0; k <= 4; ++k) {
    const double vx = f.xmin + (f.xmax - f.xmin) * k / 4.0;
    const double vy = f.ymin + (f.ymax - f.ymin) * k / 4.0;
    const int tx = static_cast<int>(f.px(vx));
    const int ty = static_cast<int>(f.py(vy));
    canvas.line(tx, f.y1, tx, f.y1 + 4, axis);
    canvas.text(tx - PlotCanvas::text_width(format_tick(vx)) / 2, f.y1 + 8, format_tick(vx), axis);
    canvas.line(f.x0 - 4, ty, f.x0, ty, axis);
    canvas.text(f.x0 - 8 - PlotCanvas::text_width(format_tick(vy)), ty - 3, format_tick(vy), axis);
  }
}

}  // namespace

PlotCanvas::PlotCanvas(int width, int height, PlotColor background) : canvas_(height, width) {
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      canvas_.at(y, x, 0) = background.r;
      canvas_.at(y, x, 1) = background.g;
      canvas_.at(y, x, 2) = background.b;
    }
}

void PlotCanvas::set_pixel(int x, int y, PlotColor c) {
  if (x < 0 || y < 0 || x >= canvas_.width || y >= canvas_.height) return;
  canvas_.at(y, x, 0) = c.r;
  canvas_.at(y, x, 1) = c.g;
  canvas_.at(y, x, 2) = c.b;
}

void PlotCanvas::fill_rect(int x0, int y0, int x1, int y1, PlotColor c) {
  for (int y = std::max(0, y0); y <= std::min(canvas_.height - 1, y1); ++y)
    for (int x = std::max(0, x0); x <= std::min(canvas_.width - 1, x1); ++x) set_pixel(x, y, c);
}

void PlotCanvas::line(double x0, double y0, double x1, double y1, PlotColor c) {
  const double dx = x1 - x0, dy = y1 - y0;
  const int steps = std::max(1, static_cast<int>(std::ceil(std::max(std::fabs(dx), std::fabs(dy)))));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    set_pixel(static_cast<int>(std::lround(x0 + t * dx)), static_cast<int>(std::lround(y0 + t * dy)), c);
  }
}

void PlotCanvas::text(int x, int y, const std::string& s, PlotColor c, int scale) {
  int cx = x;
  for (char ch : s) {
    const Glyph& g = glyph_for(ch);
    for (int row = 0; row < 7; ++row)
      for (int col = 0; col < 5; ++col)
        if (g[static_cast<std::size_t>(row)][col] == '1')
          fill_rect(cx + col * scale, y + row * scale, cx + (col + 1) * scale - 1, y + (row + 1) * scale - 1, c);
    cx += 6 * scale;
  }
}

int PlotCanvas::text_width(const std::string& s, int scale) { return static_cast<int>(s.size()) * 6 * scale; }

ImageU8 line_chart(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                   const std::string& y_label, int width, int height) {
  PlotCanvas canvas(width, height);
  Frame f{70, 40, width - 20, height - 50, 0, 1, 0, 1};
  f.xmin = f.ymin = 1e300;
  f.xmax = f.ymax = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      f.xmin = std::min(f.xmin, s.x[i]);
      f.xmax = std::max(f.xmax, s.x[i]);
      f.ymin = std::min(f.ymin, s.y[i]);
      f.ymax = std::max(f.ymax, s.y[i]);
    }
  if (f.xmin > f.xmax) {
    f.xmin = 0;
    f.xmax = 1;
  }
  if (f.ymin > f.ymax) {
    f.ymin = 0;
    f.ymax = 1;
  }
  if (f.xmax == f.xmin) f.xmax = f.xmin + 1;
  if (f.ymax == f.ymin) f.ymax = f.ymin + 1;
  f.ymin = std::min(0.0, f.ymin);
  draw_frame(canvas, f, title, x_label, y_label);

  int legend_y = f.y0 + 4;
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const PlotColor c = kPalette[si % kPalette.size()];
    for (std::size_t i = 1; i < s.x.size(); ++i)
      canvas.line(f.px(s.x[i - 1]), f.py(s.y[i - 1]), f.px(s.x[i]), f.py(s.y[i]), c);
    canvas.fill_rect(f.x1 - 150, legend_y, f.x1 - 140, legend_y + 8, c);
    canvas.text(f.x1 - 134, legend_y, s.name, {0.2, 0.2, 0.2});
    legend_y += 14;
  }
  return canvas.render();
}

ImageU8 bar_chart(const std::vector<std::string>& labels, const std::vector<double>& values, const std::string& title,
                  const std::string& y_label, int width, int height) {
  PlotCanvas canvas(width, height);
  double vmax = 1e-12;
  for (double v : values) vmax = std::max(vmax, v);
  Frame f{70, 40, width - 20, height - 70, 0, 1, 0, vmax};
  draw_frame(canvas, f, title, "", y_label);

  const int n = static_cast<int>(values.size());
  if (n == 0) return canvas.render();
  const double slot = static_cast<double>(f.x1 - f.x0) / n;
  for (int i = 0; i < n; ++i) {
    const int bx0 = static_cast<int>(f.x0 + slot * i + slot * 0.15);
    const int bx1 = static_cast<int>(f.x0 + slot * (i + 1) - slot * 0.15);
    const int by = static_cast<int>(f.py(values[static_cast<std::size_t>(i)]));
    canvas.fill_rect(bx0, by, bx1, f.y1 - 1, kPalette[static_cast<std::size_t>(i) % kPalette.size()]);
    const auto& label = labels[static_cast<std::size_t>(i)];
    canvas.text((bx0 + bx1) / 2 - PlotCanvas::text_width(label) / 2, f.y1 + 22, label, {0.2, 0.2, 0.2});
    const std::string v = format_tick(values[static_cast<std::size_t>(i)]);
    canvas.text((bx0 + bx1) / 2 - PlotCanvas::text_width(v) / 2, by - 12, v, {0.2, 0.2, 0.2});
  }
  return canvas.render();
}

ImageU8 heat_grid(const std::vector<int>& grid, int grid_size, const std::string& title, int width, int height) {
  PlotCanvas canvas(width, height);
  int vmax = 1;
  for (int v : grid) vmax = std::max(vmax, v);
  Frame f{50, 40, width - 20, height - 30, 0, 1, 0, 1};
  canvas.text(width / 2 - PlotCanvas::text_width(title, 2) / 2, 8, title, {0.25, 0.25, 0.25}, 2);
  const double cw = static_cast<double>(f.x1 - f.x0) / grid_size;
  const double ch = static_cast<double>(f.y1 - f.y0) / grid_size;
  for (int gy = 0; gy < grid_size; ++gy)
    for (int gx = 0; gx < grid_size; ++gx) {
      const double t = static_cast<double>(grid[static_cast<std::size_t>(gy) * grid_size + gx]) / vmax;
      const PlotColor c{0.95 - 0.75 * t, 0.95 - 0.55 * t, 1.0 - 0.15 * t};
      canvas.fill_rect(static_cast<int>(f.x0 + gx * cw), static_cast<int>(f.y0 + gy * ch),
                       static_cast<int>(f.x0 + (gx + 1) * cw) - 2, static_cast<int>(f.y0 + (gy + 1) * ch) - 2, c);
    }
  return canvas.render();
}

}  // namespace skdf
