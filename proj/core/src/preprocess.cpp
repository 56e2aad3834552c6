#include "cgn/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace cgn::preprocess {

ImageU8 map_14bit_to_8bit(const RawImage& img) {
  if (img.bit_depth != 14)
    throw std::invalid_argument("map_14bit_to_8bit: bit_depth must be 14, got " +
                                std::to_string(img.bit_depth));
  ImageU8 out(img.pixels.rows, img.pixels.cols);
  for (size_t i = 0; i < img.pixels.px.size(); ++i) {
    const std::uint32_t v = img.pixels.px[i];
    if (v > 16383) throw std::invalid_argument("map_14bit_to_8bit: pixel exceeds 14-bit range");
    out.px[i] = static_cast<std::uint8_t>(v * 255u / 16383u);
  }
  return out;
}

int otsu_threshold(const ImageU8& img) {
  std::array<std::int64_t, 256> hist{};
  for (std::uint8_t v : img.px) ++hist[v];

  int distinct = 0;
  for (auto h : hist)
    if (h > 0) ++distinct;
  if (distinct < 2) throw std::invalid_argument("otsu_threshold: degenerate histogram");

  const double total = static_cast<double>(img.px.size());
  double total_mean = 0.0;
  for (int v = 0; v < 256; ++v) total_mean += v * static_cast<double>(hist[static_cast<size_t>(v)]);
  total_mean /= total;

  // Between-class variance for the split {<= t} vs {> t}; t = 255 leaves
  // the upper class empty and is never a valid split.
  int best_t = 0;
  double best_var = -1.0;
  double w0 = 0.0, sum0 = 0.0;
  for (int t = 0; t < 255; ++t) {
    w0 += static_cast<double>(hist[static_cast<size_t>(t)]);
    sum0 += t * static_cast<double>(hist[static_cast<size_t>(t)]);
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double mu0 = sum0 / w0;
    const double mu1 = (total * total_mean - sum0) / w1;
    const double var = (w0 / total) * (w1 / total) * (mu0 - mu1) * (mu0 - mu1);
    if (var > best_var) {
      best_var = var;
      best_t = t;
    }
  }
  return best_t;
}

Segmented segment_breast(const ImageU8& img) {
  const int t = otsu_threshold(img);
  ImageU8 fg(img.rows, img.cols);
  bool any = false;
  for (size_t i = 0; i < img.px.size(); ++i) {
    fg.px[i] = img.px[i] > t ? 1 : 0;
    any = any || fg.px[i];
  }
  if (!any) throw std::runtime_error("segment_breast: empty foreground");

  const ImageU8 comp = largest_component(fg);
  const BBox box = tight_bbox(comp);

  Segmented out;
  out.image = ImageU8(box.height, box.width);
  out.mask = ImageU8(box.height, box.width);
  for (int r = 0; r < box.height; ++r)
    for (int c = 0; c < box.width; ++c) {
      const std::uint8_t m = comp.at(box.row + r, box.col + c);
      out.mask.at(r, c) = m;
      out.image.at(r, c) = m ? img.at(box.row + r, box.col + c) : 0;
    }
  return out;
}

ImageU8 resize_bilinear(const ImageU8& img, int out_rows, int out_cols) {
  if (img.rows <= 0 || img.cols <= 0)
    throw std::invalid_argument("resize_bilinear: empty image");
  if (img.rows == out_rows && img.cols == out_cols) return img;

  ImageU8 out(out_rows, out_cols);
  const double sr = static_cast<double>(img.rows) / out_rows;
  const double sc = static_cast<double>(img.cols) / out_cols;
  for (int r = 0; r < out_rows; ++r) {
    const double fr = (r + 0.5) * sr - 0.5;
    const int r0 = std::clamp(static_cast<int>(std::floor(fr)), 0, img.rows - 1);
    const int r1 = std::min(r0 + 1, img.rows - 1);
    const double wr = std::clamp(fr - r0, 0.0, 1.0);
    for (int c = 0; c < out_cols; ++c) {
      const double fc = (c + 0.5) * sc - 0.5;
      const int c0 = std::clamp(static_cast<int>(std::floor(fc)), 0, img.cols - 1);
      const int c1 = std::min(c0 + 1, img.cols - 1);
      const double wc = std::clamp(fc - c0, 0.0, 1.0);
      const double v = (1 - wr) * ((1 - wc) * img.at(r0, c0) + wc * img.at(r0, c1)) +
                       wr * ((1 - wc) * img.at(r1, c0) + wc * img.at(r1, c1));
      out.at(r, c) = static_cast<std::uint8_t>(std::lround(v));
    }
  }
  return out;
}

ImageU8 resize_to_224(const ImageU8& img) { return resize_bilinear(img, 224, 224); }

ImageU8 mirror_reference(const ImageU8& img) {
  ImageU8 out(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r)
    for (int c = 0; c < img.cols; ++c) out.at(r, c) = img.at(r, img.cols - 1 - c);
  return out;
}

ImageU8 pipeline(const ImageU8& img) { return resize_to_224(segment_breast(img).image); }

}  // namespace cgn::preprocess
