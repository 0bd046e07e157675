#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace skdf {

/// 8-bit RGB image, row-major interleaved.
struct ImageU8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t& at(int y, int x, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

/// Working surface for rasterization, values in [0,1].
struct Canvas {
  int height = 0;
  int width = 0;
  std::vector<double> px;

  Canvas() = default;
  Canvas(int h, int w, double fill = 0.0) : height(h), width(w), px(static_cast<std::size_t>(h) * w * 3, fill) {}

  double& at(int y, int x, int c) { return px[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return px[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  ImageU8 quantize() const;
};

ImageU8 to_u8(const std::vector<double>& px, int height, int width);

void write_png(const std::filesystem::path& path, const ImageU8& image,
               const std::vector<std::pair<std::string, std::string>>& text_fields = {});
ImageU8 read_png(const std::filesystem::path& path);

}  // namespace skdf
