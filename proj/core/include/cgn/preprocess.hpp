#pragma once

#include "cgn/image.hpp"

namespace cgn::preprocess {

/// Raw detector image; bit_depth is 8 or 14.
struct RawImage {
  ImageU16 pixels;
  int bit_depth = 14;
};

/// Linear 14-bit to 8-bit mapping: floor(v * 255 / 16383).
/// Monotone with endpoints 0 -> 0 and 16383 -> 255.
ImageU8 map_14bit_to_8bit(const RawImage& img);

/// Threshold maximizing between-class variance over the 256-bin
/// histogram; ties resolved to the smallest threshold. Foreground is
/// the set of pixels strictly above the returned value.
/// Throws on a constant image ("degenerate histogram").
int otsu_threshold(const ImageU8& img);

struct Segmented {
  ImageU8 image;  // cropped to the component's tight box, background zeroed
  ImageU8 mask;   // same crop, 1 on the kept component
};

/// Otsu foreground, largest 4-connected component, background removal,
/// tight crop.
Segmented segment_breast(const ImageU8& img);

/// Bilinear resample with pixel-center alignment.
ImageU8 resize_bilinear(const ImageU8& img, int out_rows, int out_cols);
ImageU8 resize_to_224(const ImageU8& img);

/// Column-reversed copy; applied to reference images before feature
/// extraction so corresponding anatomy lands on corresponding pixels.
ImageU8 mirror_reference(const ImageU8& img);

/// segment -> resize; the standard preparation for the models.
ImageU8 pipeline(const ImageU8& img);

}  // namespace cgn::preprocess
