#include "cgn/dataset.hpp"

#include <stdexcept>

#include "cgn/preprocess.hpp"
#include "cgn/rng.hpp"

namespace cgn::data {

std::vector<int> Dataset::split_indices(const std::string& split) const {
  std::vector<int> out;
  for (size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == split) out.push_back(static_cast<int>(i));
  return out;
}

const Sample& Dataset::by_id(const std::string& id) const {
  for (const auto& s : samples)
    if (s.id == id) return s;
  throw std::out_of_range("dataset has no sample " + id);
}

Dataset Dataset::load(const std::filesystem::path& dir) {
  const auto manifest = synth::DatasetManifest::load(dir / "manifest");
  Dataset d;
  for (const auto& row : manifest.rows) {
    Sample s;
    s.id = row.id;
    s.label = row.label;
    s.bbox = row.bbox;
    s.split = row.split;
    s.x_t = read_png_gray(dir / "images" / (row.id + "_T.png"));
    s.x_r_mirrored = preprocess::mirror_reference(read_png_gray(dir / "images" / (row.id + "_R.png")));
    ImageU8 mask = read_png_gray(dir / "masks" / (row.id + ".png"));
    for (auto& v : mask.px) v = v > 0 ? 1 : 0;
    s.lesion_mask = std::move(mask);
    d.samples.push_back(std::move(s));
  }
  if (d.samples.empty()) throw std::runtime_error("dataset is empty: " + dir.string());
  d.image_size = d.samples[0].x_t.rows;
  return d;
}

Dataset Dataset::from_config(const synth::SynthConfig& config) {
  if (config.n_samples <= 0) throw std::invalid_argument("empty dataset requested");
  const auto splits = synth::assign_splits(config.n_samples, config.seed);
  Dataset d;
  d.image_size = config.image_size;
  for (int i = 0; i < config.n_samples; ++i) {
    synth::BilateralSample b = synth::generate_sample(config, i);
    Sample s;
    s.id = b.sample_id;
    s.label = b.y_T;
    s.bbox = b.bbox;
    s.split = splits[static_cast<size_t>(i)];
    s.x_t = std::move(b.x_T);
    s.x_r_mirrored = preprocess::mirror_reference(b.x_R);
    s.lesion_mask = std::move(b.lesion_mask);
    d.samples.push_back(std::move(s));
  }
  return d;
}

std::vector<int> fold_assignment(int n_samples, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("fold_assignment: need k >= 2");
  std::vector<int> order(static_cast<size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng = Rng(seed).fork(0x464f4c44u);
  rng.shuffle(order);
  std::vector<int> fold(static_cast<size_t>(n_samples), 0);
  for (int i = 0; i < n_samples; ++i)
    fold[static_cast<size_t>(order[static_cast<size_t>(i)])] = i % k;
  return fold;
}

}  // namespace cgn::data
