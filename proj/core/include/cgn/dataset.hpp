#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cgn/image.hpp"
#include "cgn/synth.hpp"

namespace cgn::data {

/// One training/evaluation pair. The reference image is mirrored once at
/// load time so corresponding anatomy is spatially aligned for the
/// feature extractor.
struct Sample {
  std::string id;
  ImageU8 x_t;
  ImageU8 x_r_mirrored;
  int label = 0;
  ImageU8 lesion_mask;  // {0,1}, target geometry
  BBox bbox;
  std::string split;
};

struct Dataset {
  std::vector<Sample> samples;
  int image_size = 224;

  std::vector<int> split_indices(const std::string& split) const;
  const Sample& by_id(const std::string& id) const;

  /// Reads a generated dataset directory (manifest + images + masks).
  static Dataset load(const std::filesystem::path& dir);
  /// Generates the same content in memory, skipping the disk round-trip.
  static Dataset from_config(const synth::SynthConfig& config);
};

/// Patient-stratified fold assignment for k-fold evaluation: fold id per
/// sample, deterministic in seed.
std::vector<int> fold_assignment(int n_samples, int k, std::uint64_t seed);

}  // namespace cgn::data
