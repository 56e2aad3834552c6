#pragma once

#include <filesystem>
#include <vector>

#include "cgn/image.hpp"
#include "cgn/tensor.hpp"

namespace cgn::plots {

ImageRGB gray_to_rgb(const ImageU8& img);

/// Min-max normalized colormapped rendering of a 2-D map, bilinearly
/// upsampled to out_size x out_size.
ImageRGB heatmap(const Tensor& map2d, int out_size);

/// Per-position maximum across channels of a (C,h,w) feature tensor.
Tensor channel_max(const Tensor& features);

void draw_rect(ImageRGB& img, const BBox& box, std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Blends a colormapped CAM over a grayscale base image.
ImageRGB overlay(const ImageU8& base, const Tensor& cam, double blend);

ImageRGB hstack(const std::vector<ImageRGB>& panels, int pad = 2);

/// Six-panel figure per test sample: target, target with ground-truth
/// box, mirrored reference, then channel-max heatmaps of the target,
/// reference and counterfactual feature maps. Returns files written.
int plot_feature_heatmaps(const std::filesystem::path& run_dir);

/// One strip per snapshot sample: input pair with the ground-truth box,
/// then CAM snapshots at the requested epoch cadence, ascending.
int plot_training_progression(const std::filesystem::path& run_dir, int every_n_epochs);

/// CAM blended over the target image, with ground-truth (green) and
/// predicted (red) boxes; one image per test sample.
int plot_cam_overlays(const std::filesystem::path& run_dir);

}  // namespace cgn::plots
