#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cgn {

/// Axis-aligned pixel box, (row, col) of the top-left corner plus extent.
struct BBox {
  int row = 0;
  int col = 0;
  int height = 0;
  int width = 0;

  bool operator==(const BBox&) const = default;
  long long area() const { return static_cast<long long>(height) * width; }
};

/// Intersection-over-union of two boxes; 0 when disjoint, 1 iff identical.
double iou(const BBox& a, const BBox& b);

struct ImageU8 {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> px;

  ImageU8() = default;
  ImageU8(int r, int c) : rows(r), cols(c), px(static_cast<size_t>(r) * c, 0) {}

  std::uint8_t& at(int r, int c) { return px[static_cast<size_t>(r) * cols + c]; }
  std::uint8_t at(int r, int c) const { return px[static_cast<size_t>(r) * cols + c]; }
  bool empty() const { return px.empty(); }
  bool operator==(const ImageU8&) const = default;
};

struct ImageU16 {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint16_t> px;

  ImageU16() = default;
  ImageU16(int r, int c) : rows(r), cols(c), px(static_cast<size_t>(r) * c, 0) {}

  std::uint16_t& at(int r, int c) { return px[static_cast<size_t>(r) * cols + c]; }
  std::uint16_t at(int r, int c) const { return px[static_cast<size_t>(r) * cols + c]; }
  bool operator==(const ImageU16&) const = default;
};

/// Interleaved RGB canvas used by the plotting helpers.
struct ImageRGB {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> px;  // 3 bytes per pixel

  ImageRGB() = default;
  ImageRGB(int r, int c) : rows(r), cols(c), px(static_cast<size_t>(r) * c * 3, 0) {}

  std::uint8_t* at(int r, int c) { return &px[(static_cast<size_t>(r) * cols + c) * 3]; }
};

/// 4-connected component labelling of the nonzero pixels.
/// Returns per-pixel labels (0 = background, components numbered from 1)
/// and the pixel count of each component (index label-1).
struct Components {
  std::vector<int> labels;
  std::vector<int> sizes;
};
Components connected_components(const ImageU8& mask);

/// Keeps only the largest 4-connected nonzero component (ties: smallest
/// label, i.e. first in scan order). Errors on an all-zero mask.
ImageU8 largest_component(const ImageU8& mask);

/// Tight bounding box of the nonzero pixels; errors on an all-zero mask.
BBox tight_bbox(const ImageU8& mask);

ImageU8 read_png_gray(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const ImageU8& img);
void write_png_rgb(const std::filesystem::path& path, const ImageRGB& img);

/// Raw 14-bit array container: "R14\n<rows> <cols>\n" header followed by
/// row-major little-endian uint16 samples.
ImageU16 read_raw14(const std::filesystem::path& path);
void write_raw14(const std::filesystem::path& path, const ImageU16& img);

}  // namespace cgn
