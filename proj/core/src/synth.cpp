#include "cgn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "cgn/csv.hpp"
#include "cgn/rng.hpp"

namespace cgn::synth {

using nlohmann::json;

void SynthConfig::validate() const {
  if (image_size < 32) throw std::invalid_argument("image_size too small");
  if (lesion_radius_min < 2 || lesion_radius_max < lesion_radius_min)
    throw std::invalid_argument("bad lesion radius range");
  if (lesion_radius_max >= image_size / 4)
    throw std::invalid_argument("lesion_radius_max must be < image_size/4");
  if (malign_fraction < 0.0 || malign_fraction > 1.0)
    throw std::invalid_argument("malign_fraction must be in [0,1]");
  if (lesion_contrast < 0 || lesion_contrast > 255)
    throw std::invalid_argument("lesion_contrast must be in [0,255]");
  if (jitter_px < 0.0) throw std::invalid_argument("jitter_px must be >= 0");
  if (n_distractors < 0) throw std::invalid_argument("n_distractors must be >= 0");
}

std::string SynthConfig::to_json() const {
  json j;
  j["image_size"] = image_size;
  j["n_samples"] = n_samples;
  j["lesion_radius_min"] = lesion_radius_min;
  j["lesion_radius_max"] = lesion_radius_max;
  j["texture_scale"] = texture_scale;
  j["malign_fraction"] = malign_fraction;
  j["lesion_contrast"] = lesion_contrast;
  j["seed"] = seed;
  j["jitter_px"] = jitter_px;
  j["n_distractors"] = n_distractors;
  j["distractor_spiky_fraction"] = distractor_spiky_fraction;
  j["distractor_contrast"] = distractor_contrast;
  return j.dump(2);
}

SynthConfig SynthConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  SynthConfig c;
  c.image_size = j.value("image_size", c.image_size);
  c.n_samples = j.value("n_samples", c.n_samples);
  c.lesion_radius_min = j.value("lesion_radius_min", c.lesion_radius_min);
  c.lesion_radius_max = j.value("lesion_radius_max", c.lesion_radius_max);
  c.texture_scale = j.value("texture_scale", c.texture_scale);
  c.malign_fraction = j.value("malign_fraction", c.malign_fraction);
  c.lesion_contrast = j.value("lesion_contrast", c.lesion_contrast);
  c.seed = j.value("seed", c.seed);
  c.jitter_px = j.value("jitter_px", c.jitter_px);
  c.n_distractors = j.value("n_distractors", c.n_distractors);
  c.distractor_spiky_fraction = j.value("distractor_spiky_fraction", c.distractor_spiky_fraction);
  c.distractor_contrast = j.value("distractor_contrast", c.distractor_contrast);
  c.validate();
  return c;
}

namespace {

/// Smooth scalar field: coarse random grid, bilinearly interpolated.
class ValueNoise {
public:
  ValueNoise(Rng& rng, int size, double cell) : cell_(std::max(cell, 2.0)) {
    grid_ = static_cast<int>(std::ceil(size / cell_)) + 2;
    values_.resize(static_cast<size_t>(grid_) * grid_);
    for (auto& v : values_) v = rng.uniform(-1.0, 1.0);
  }

  double at(double r, double c) const {
    const double gr = r / cell_, gc = c / cell_;
    const int r0 = std::clamp(static_cast<int>(std::floor(gr)), 0, grid_ - 2);
    const int c0 = std::clamp(static_cast<int>(std::floor(gc)), 0, grid_ - 2);
    const double fr = std::clamp(gr - r0, 0.0, 1.0);
    const double fc = std::clamp(gc - c0, 0.0, 1.0);
    const auto g = [this](int rr, int cc) {
      return values_[static_cast<size_t>(rr) * grid_ + cc];
    };
    return (1 - fr) * ((1 - fc) * g(r0, c0) + fc * g(r0, c0 + 1)) +
           fr * ((1 - fc) * g(r0 + 1, c0) + fc * g(r0 + 1, c0 + 1));
  }

private:
  double cell_;
  int grid_;
  std::vector<double> values_;
};

/// Lesion-like structure. Spiky blobs follow the malignant morphology:
/// a strongly perturbed boundary, thin stellate rays and a
/// heterogeneous interior. Smooth blobs are soft-edged homogeneous
/// discs with mild ellipticity.
struct Blob {
  double row = 0.0, col = 0.0;
  double radius = 8.0;
  bool spiky = false;
  double contrast = 0.0;
  double harmonics[4] = {0, 0, 0, 0};  // boundary amplitudes
  double phases[4] = {0, 0, 0, 0};
  int base_freq = 2;
  double edge_width = 3.0;
  int n_rays = 0;
  double ray_phase = 0.0;
  double speckle_freq = 0.0;  // interior heterogeneity, 0 = homogeneous

  double boundary_radius(double theta) const {
    double w = 0.0;
    for (int k = 0; k < 4; ++k)
      w += harmonics[k] * std::sin((base_freq + k) * theta + phases[k]);
    return radius * (1.0 + w);
  }

  /// Core profile in [0,1]; 0.5 on the boundary curve. Drives both the
  /// intensity bump and the ground-truth mask.
  double profile(double r, double c) const {
    const double dr = r - row, dc = c - col;
    const double dist = std::sqrt(dr * dr + dc * dc);
    if (dist > 2.2 * radius) return 0.0;
    const double theta = std::atan2(dr, dc);
    double p = std::clamp((boundary_radius(theta) - dist) / edge_width + 0.5, 0.0, 1.0);
    if (speckle_freq > 0.0 && p > 0.0)
      p *= 1.0 + 0.30 * std::sin(speckle_freq * dr) * std::cos(speckle_freq * dc);
    return std::clamp(p, 0.0, 1.0);
  }

  /// Faint stellate rays outside the core; rendered but kept below the
  /// mask threshold.
  double ray_profile(double r, double c) const {
    if (n_rays == 0) return 0.0;
    const double dr = r - row, dc = c - col;
    const double dist = std::sqrt(dr * dr + dc * dc);
    if (dist < 0.3 * radius || dist > 2.6 * radius) return 0.0;
    const double theta = std::atan2(dr, dc);
    double best = 0.0;
    for (int k = 0; k < n_rays; ++k) {
      const double phi = ray_phase + 2.0 * M_PI * k / n_rays;
      double delta = std::fabs(std::remainder(theta - phi, 2.0 * M_PI));
      const double across = delta * dist;  // arc distance off the ray spine
      const double along = 1.0 - dist / (2.6 * radius);
      best = std::max(best, std::clamp(1.8 - across, 0.0, 1.0) * std::clamp(along, 0.0, 1.0));
    }
    return 0.45 * best;
  }
};

Blob random_blob(Rng& rng, bool spiky, double radius, double contrast) {
  Blob b;
  b.radius = radius;
  b.spiky = spiky;
  b.contrast = contrast;
  if (spiky) {
    b.base_freq = 6 + rng.uniform_int(3);
    for (int k = 0; k < 4; ++k) {
      b.harmonics[k] = rng.uniform(0.25, 0.45);
      b.phases[k] = rng.uniform(0.0, 2.0 * M_PI);
    }
    b.edge_width = 1.2;
    b.n_rays = 6 + rng.uniform_int(5);
    b.ray_phase = rng.uniform(0.0, 2.0 * M_PI);
    b.speckle_freq = rng.uniform(0.7, 1.1);
  } else {
    b.base_freq = 2;
    b.harmonics[0] = rng.uniform(0.0, 0.05);
    b.phases[0] = rng.uniform(0.0, 2.0 * M_PI);
    b.edge_width = 3.5;
  }
  return b;
}

/// Shared-anatomy scene rendered on target geometry. The reference image
/// samples the same scene mirrored, through an elastic displacement.
struct Scene {
  int size;
  double breast_cy, ar, ac;  // half-ellipse anchored at the left edge
  ValueNoise tex0, tex1, tex2;
  std::vector<Blob> distractors;

  // The breast over-fills the frame: crop and resize in the
  // normalization pipeline are identities on these images, and the
  // boundary stays sharp (no interpolation dust), which keeps the
  // zero-background / tissue histogram gap empty.
  Scene(Rng& rng, const SynthConfig& cfg)
      : size(cfg.image_size),
        breast_cy(cfg.image_size * rng.uniform(0.49, 0.51)),
        ar(cfg.image_size * rng.uniform(0.56, 0.62)),
        ac(cfg.image_size * rng.uniform(1.03, 1.12)),
        tex0(rng, cfg.image_size, cfg.texture_scale),
        tex1(rng, cfg.image_size, cfg.texture_scale / 2),
        tex2(rng, cfg.image_size, cfg.texture_scale / 4) {}

  bool inside_breast(double r, double c, double shrink = 1.0) const {
    if (c < 0.0) return false;
    const double nr = (r - breast_cy) / (ar * shrink);
    const double nc = c / (ac * shrink);
    return nr * nr + nc * nc <= 1.0;
  }

  /// Random point comfortably inside the breast and the frame.
  std::pair<double, double> interior_point(Rng& rng, double margin_px) const {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double r = rng.uniform(margin_px, size - margin_px);
      const double c = rng.uniform(margin_px, size - margin_px);
      if (inside_breast(r, c, 0.80)) return {r, c};
    }
    return {breast_cy, size * 0.4};
  }

  double intensity(double r, double c) const {
    if (!inside_breast(r, c)) return 0.0;
    // Tissue values live in roughly [90, 160]: far from the zero
    // background, tight enough that Otsu prefers the background split.
    double v = 118.0 + 12.0 * (1.0 - c / ac);
    v += 16.0 * tex0.at(r, c) + 8.0 * tex1.at(r, c) + 4.0 * tex2.at(r, c);
    for (const Blob& b : distractors)
      v += b.contrast * (b.profile(r, c) + b.ray_profile(r, c));
    return std::clamp(v, 60.0, 250.0);
  }
};

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
}

struct SceneBundle {
  Scene scene;
  ValueNoise jit_r, jit_c;
  double jitter_scale;

  SceneBundle(Rng& rng, const SynthConfig& cfg)
      : scene(rng, cfg),
        jit_r(rng, cfg.image_size, 32.0),
        jit_c(rng, cfg.image_size, 32.0),
        jitter_scale(cfg.jitter_px) {}

  ImageU8 render_target(const Blob* lesion) const {
    ImageU8 img(scene.size, scene.size);
    for (int r = 0; r < scene.size; ++r)
      for (int c = 0; c < scene.size; ++c) {
        double v = scene.intensity(r, c);
        if (lesion && v > 0.0)
          v += lesion->contrast * (lesion->profile(r, c) + lesion->ray_profile(r, c));
        img.at(r, c) = quantize(v);
      }
    return img;
  }

  /// Mirrored sampling of the shared scene through the elastic field.
  ImageU8 render_reference() const {
    ImageU8 img(scene.size, scene.size);
    for (int r = 0; r < scene.size; ++r)
      for (int c = 0; c < scene.size; ++c) {
        const double mr = r + jitter_scale * jit_r.at(r, c);
        const double mc = (scene.size - 1.0 - c) + jitter_scale * jit_c.at(r, c);
        img.at(r, c) = quantize(scene.intensity(mr, mc));
      }
    return img;
  }
};

constexpr std::uint64_t kSplitTag = 0x5350u;    // split shuffling stream
constexpr std::uint64_t kHealthyTag = 0x4845u;  // healthy-pair stream offset

}  // namespace

BilateralSample generate_sample(const SynthConfig& config, int index) {
  config.validate();
  Rng rng = Rng(config.seed).fork(static_cast<std::uint64_t>(index) + 1);

  BilateralSample out;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "p%05d", index);
  out.sample_id = buf;
  out.y_T = rng.bernoulli(config.malign_fraction) ? 1 : 0;

  SceneBundle bundle(rng, config);
  Scene& scene = bundle.scene;

  // Shared distractors, visible on both sides.
  for (int k = 0; k < config.n_distractors; ++k) {
    const double radius = rng.uniform(config.lesion_radius_min, config.lesion_radius_max);
    const bool spiky = rng.bernoulli(config.distractor_spiky_fraction);
    Blob b = random_blob(rng, spiky, radius, config.distractor_contrast * rng.uniform(0.8, 1.1));
    const auto [r, c] = scene.interior_point(rng, radius + 6.0);
    b.row = r;
    b.col = c;
    scene.distractors.push_back(b);
  }

  // The target-only lesion; morphology carries the label.
  const double lesion_radius =
      rng.uniform(config.lesion_radius_min, config.lesion_radius_max);
  Blob lesion = random_blob(rng, out.y_T == 1, lesion_radius,
                            static_cast<double>(config.lesion_contrast));
  {
    double best_r = scene.breast_cy, best_c = scene.ac * 0.4, best_sep = -1.0;
    for (int attempt = 0; attempt < 60; ++attempt) {
      const auto [r, c] = scene.interior_point(rng, lesion_radius + 6.0);
      double sep = 1e9;
      for (const Blob& b : scene.distractors) {
        const double d = std::hypot(r - b.row, c - b.col) - (b.radius + lesion_radius);
        sep = std::min(sep, d);
      }
      if (sep > best_sep) {
        best_sep = sep;
        best_r = r;
        best_c = c;
      }
      if (sep > 6.0) break;
    }
    lesion.row = best_r;
    lesion.col = best_c;
  }

  out.x_T = bundle.render_target(&lesion);
  out.x_R = bundle.render_reference();

  out.lesion_mask = ImageU8(config.image_size, config.image_size);
  out.foreground_T = ImageU8(config.image_size, config.image_size);
  for (int r = 0; r < config.image_size; ++r)
    for (int c = 0; c < config.image_size; ++c) {
      out.foreground_T.at(r, c) = scene.inside_breast(r, c) ? 1 : 0;
      out.lesion_mask.at(r, c) =
          (out.foreground_T.at(r, c) && lesion.profile(r, c) >= 0.5) ? 1 : 0;
    }
  out.bbox = tight_bbox(largest_component(out.lesion_mask));
  return out;
}

std::vector<std::pair<ImageU8, ImageU8>> generate_healthy_pairs(const SynthConfig& config,
                                                                int n) {
  config.validate();
  std::vector<std::pair<ImageU8, ImageU8>> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng(config.seed).fork(kHealthyTag + static_cast<std::uint64_t>(i) * 2 + 1);
    rng.bernoulli(0.5);  // keep the draw order aligned with generate_sample
    SceneBundle bundle(rng, config);
    for (int k = 0; k < config.n_distractors; ++k) {
      const double radius = rng.uniform(config.lesion_radius_min, config.lesion_radius_max);
      const bool spiky = rng.bernoulli(config.distractor_spiky_fraction);
      Blob b = random_blob(rng, spiky, radius,
                           config.distractor_contrast * rng.uniform(0.8, 1.1));
      const auto [r, c] = bundle.scene.interior_point(rng, radius + 6.0);
      b.row = r;
      b.col = c;
      bundle.scene.distractors.push_back(b);
    }
    out.emplace_back(bundle.render_target(nullptr), bundle.render_reference());
  }
  return out;
}

std::vector<std::string> assign_splits(int n_samples, std::uint64_t seed) {
  if (n_samples <= 0) throw std::invalid_argument("empty dataset requested");
  std::vector<int> order(static_cast<size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng = Rng(seed).fork(kSplitTag);
  rng.shuffle(order);

  int n_val = n_samples / 10;
  int n_test = n_samples / 10;
  if (n_samples >= 3) {
    n_val = std::max(1, n_val);
    n_test = std::max(1, n_test);
  }
  std::vector<std::string> splits(static_cast<size_t>(n_samples), "train");
  for (int i = 0; i < n_val; ++i) splits[static_cast<size_t>(order[static_cast<size_t>(i)])] = "val";
  for (int i = n_val; i < n_val + n_test; ++i)
    splits[static_cast<size_t>(order[static_cast<size_t>(i)])] = "test";
  return splits;
}

std::vector<std::string> DatasetManifest::ids_in_split(const std::string& split) const {
  std::vector<std::string> out;
  for (const auto& row : rows)
    if (row.split == split) out.push_back(row.id);
  return out;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  CsvTable t;
  t.header = {"id", "split", "label", "row", "col", "height", "width"};
  for (const auto& r : rows)
    t.rows.push_back({r.id, r.split, std::to_string(r.label), std::to_string(r.bbox.row),
                      std::to_string(r.bbox.col), std::to_string(r.bbox.height),
                      std::to_string(r.bbox.width)});
  write_csv(path, t);
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  DatasetManifest m;
  for (size_t i = 0; i < t.rows.size(); ++i) {
    ManifestRow r;
    r.id = t.cell(i, "id");
    r.split = t.cell(i, "split");
    r.label = std::stoi(t.cell(i, "label"));
    r.bbox = BBox{std::stoi(t.cell(i, "row")), std::stoi(t.cell(i, "col")),
                  std::stoi(t.cell(i, "height")), std::stoi(t.cell(i, "width"))};
    m.rows.push_back(std::move(r));
  }
  return m;
}

DatasetManifest generate_dataset(const SynthConfig& config,
                                 const std::filesystem::path& out_dir) {
  config.validate();
  if (config.n_samples <= 0) throw std::invalid_argument("empty dataset requested");

  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks");
  fs::create_directories(out_dir / "meta");

  const auto splits = assign_splits(config.n_samples, config.seed);
  DatasetManifest manifest;
  for (int i = 0; i < config.n_samples; ++i) {
    const BilateralSample s = generate_sample(config, i);
    write_png_gray(out_dir / "images" / (s.sample_id + "_T.png"), s.x_T);
    write_png_gray(out_dir / "images" / (s.sample_id + "_R.png"), s.x_R);
    ImageU8 mask_vis(s.lesion_mask.rows, s.lesion_mask.cols);
    for (size_t k = 0; k < mask_vis.px.size(); ++k)
      mask_vis.px[k] = s.lesion_mask.px[k] ? 255 : 0;
    write_png_gray(out_dir / "masks" / (s.sample_id + ".png"), mask_vis);

    json meta;
    meta["id"] = s.sample_id;
    meta["label"] = s.y_T;
    meta["bbox"] = {s.bbox.row, s.bbox.col, s.bbox.height, s.bbox.width};
    meta["mask"] = "masks/" + s.sample_id + ".png";
    std::ofstream(out_dir / "meta" / (s.sample_id + ".json")) << meta.dump(2) << '\n';

    manifest.rows.push_back(
        ManifestRow{s.sample_id, splits[static_cast<size_t>(i)], s.y_T, s.bbox});
  }
  manifest.save(out_dir / "manifest");

  std::ofstream(out_dir / "synth_config.json") << config.to_json() << '\n';
  return manifest;
}

}  // namespace cgn::synth
