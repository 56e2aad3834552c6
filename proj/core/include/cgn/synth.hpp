#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cgn/image.hpp"

namespace cgn::synth {

struct SynthConfig {
  int image_size = 224;
  int n_samples = 0;
  int lesion_radius_min = 10;
  int lesion_radius_max = 22;
  double texture_scale = 40.0;  // value-noise cell size in pixels
  double malign_fraction = 0.5;
  int lesion_contrast = 60;  // intensity delta in [0,255]
  std::uint64_t seed = 0;

  /// Elastic displacement between the two sides, in pixels. Naive pixel
  /// subtraction fails at the default; set 0 for mirror-exact pairs.
  double jitter_px = 3.0;
  /// Lesion-like structures stamped into the shared anatomy of BOTH
  /// sides. They make single-view classification ambiguous: only the
  /// target-side-only blob carries the label.
  int n_distractors = 4;
  double distractor_spiky_fraction = 0.5;
  int distractor_contrast = 60;

  void validate() const;
  std::string to_json() const;
  static SynthConfig from_json(const std::string& text);
};

struct BilateralSample {
  ImageU8 x_T;          // target side
  ImageU8 x_R;          // reference side (unmirrored, opposite orientation)
  int y_T = 0;          // 1 = malignant
  ImageU8 lesion_mask;  // {0,1} on target geometry
  BBox bbox;            // tight box of the mask's largest component
  std::string sample_id;

  ImageU8 foreground_T;  // breast support, for segmentation checks
};

/// Deterministic in (config.seed, index). The malignant/benign signal is
/// the lesion's boundary morphology: spiculated star vs smooth disc.
BilateralSample generate_sample(const SynthConfig& config, int index);

/// Lesion-free pairs from the same shared-anatomy process.
std::vector<std::pair<ImageU8, ImageU8>> generate_healthy_pairs(const SynthConfig& config,
                                                                int n);

struct ManifestRow {
  std::string id;
  std::string split;  // train / val / test
  int label = 0;
  BBox bbox;
};

struct DatasetManifest {
  std::vector<ManifestRow> rows;

  std::vector<std::string> ids_in_split(const std::string& split) const;
  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);
};

/// Patient-wise 8:1:1 split assignment (one patient per pair).
std::vector<std::string> assign_splits(int n_samples, std::uint64_t seed);

/// Writes images/<id>_{T,R}.png, masks/<id>.png, meta/<id>.json and the
/// `manifest` listing id, split, label, bbox. Byte-identical for
/// identical configs.
DatasetManifest generate_dataset(const SynthConfig& config,
                                 const std::filesystem::path& out_dir);

}  // namespace cgn::synth
