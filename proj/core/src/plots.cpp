#include "cgn/plots.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "cgn/attention.hpp"
#include "cgn/serialize.hpp"
#include "cgn/trainer.hpp"

namespace cgn::plots {

namespace {

// Inferno-style stops, interpolated linearly.
constexpr int kStops = 7;
constexpr std::uint8_t kMap[kStops][3] = {
    {0, 0, 4},     {40, 11, 84},   {101, 21, 110}, {159, 42, 99},
    {212, 72, 66}, {245, 125, 21}, {252, 255, 164}};

void colormap(double v, std::uint8_t* rgb) {
  v = std::clamp(v, 0.0, 1.0) * (kStops - 1);
  const int i = std::min(static_cast<int>(v), kStops - 2);
  const double f = v - i;
  for (int k = 0; k < 3; ++k)
    rgb[k] = static_cast<std::uint8_t>(std::lround((1 - f) * kMap[i][k] + f * kMap[i + 1][k]));
}

double bilinear_at(const Tensor& m, double r, double c) {
  const int h = m.dim(0), w = m.dim(1);
  const int r0 = std::clamp(static_cast<int>(std::floor(r)), 0, h - 1);
  const int c0 = std::clamp(static_cast<int>(std::floor(c)), 0, w - 1);
  const int r1 = std::min(r0 + 1, h - 1), c1 = std::min(c0 + 1, w - 1);
  const double fr = std::clamp(r - r0, 0.0, 1.0), fc = std::clamp(c - c0, 0.0, 1.0);
  return (1 - fr) * ((1 - fc) * m.at({r0, c0}) + fc * m.at({r0, c1})) +
         fr * ((1 - fc) * m.at({r1, c0}) + fc * m.at({r1, c1}));
}

}  // namespace

ImageRGB gray_to_rgb(const ImageU8& img) {
  ImageRGB out(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r)
    for (int c = 0; c < img.cols; ++c) {
      std::uint8_t* px = out.at(r, c);
      px[0] = px[1] = px[2] = img.at(r, c);
    }
  return out;
}

Tensor channel_max(const Tensor& features) {
  if (features.rank() != 3) throw std::invalid_argument("channel_max: expected (C,h,w)");
  const int c = features.dim(0), h = features.dim(1), w = features.dim(2);
  Tensor out({h, w});
  for (int p = 0; p < h * w; ++p) {
    double m = features[p];
    for (int k = 1; k < c; ++k) m = std::max(m, features[static_cast<std::int64_t>(k) * h * w + p]);
    out[p] = m;
  }
  return out;
}

ImageRGB heatmap(const Tensor& map2d, int out_size) {
  if (map2d.rank() != 2) throw std::invalid_argument("heatmap: expected (h,w)");
  const double lo = map2d.min(), hi = map2d.max();
  const double span = hi > lo ? hi - lo : 1.0;
  const int h = map2d.dim(0), w = map2d.dim(1);
  ImageRGB out(out_size, out_size);
  for (int r = 0; r < out_size; ++r)
    for (int c = 0; c < out_size; ++c) {
      const double sr = (r + 0.5) * h / out_size - 0.5;
      const double sc = (c + 0.5) * w / out_size - 0.5;
      colormap((bilinear_at(map2d, sr, sc) - lo) / span, out.at(r, c));
    }
  return out;
}

void draw_rect(ImageRGB& img, const BBox& box, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const int r0 = std::clamp(box.row, 0, img.rows - 1);
  const int c0 = std::clamp(box.col, 0, img.cols - 1);
  const int r1 = std::clamp(box.row + box.height - 1, 0, img.rows - 1);
  const int c1 = std::clamp(box.col + box.width - 1, 0, img.cols - 1);
  const auto set = [&](int rr, int cc) {
    std::uint8_t* px = img.at(rr, cc);
    px[0] = r;
    px[1] = g;
    px[2] = b;
  };
  for (int c = c0; c <= c1; ++c) {
    set(r0, c);
    set(r1, c);
    if (r0 + 1 <= r1) { set(std::min(r0 + 1, img.rows - 1), c); set(std::max(r1 - 1, 0), c); }
  }
  for (int rr = r0; rr <= r1; ++rr) {
    set(rr, c0);
    set(rr, c1);
    if (c0 + 1 <= c1) { set(rr, std::min(c0 + 1, img.cols - 1)); set(rr, std::max(c1 - 1, 0)); }
  }
}

ImageRGB overlay(const ImageU8& base, const Tensor& cam, double blend) {
  const ImageRGB heat = heatmap(cam, base.rows);
  ImageRGB out = gray_to_rgb(base);
  for (size_t i = 0; i < out.px.size(); ++i)
    out.px[i] = static_cast<std::uint8_t>(
        std::lround((1.0 - blend) * out.px[i] + blend * heat.px[i]));
  return out;
}

ImageRGB hstack(const std::vector<ImageRGB>& panels, int pad) {
  if (panels.empty()) throw std::invalid_argument("hstack: no panels");
  const int rows = panels[0].rows;
  int cols = -pad;
  for (const auto& p : panels) {
    if (p.rows != rows) throw std::invalid_argument("hstack: inconsistent panel heights");
    cols += p.cols + pad;
  }
  ImageRGB out(rows, cols);
  std::fill(out.px.begin(), out.px.end(), 255);
  int offset = 0;
  for (const auto& p : panels) {
    for (int r = 0; r < rows; ++r)
      std::copy_n(p.px.data() + static_cast<size_t>(r) * p.cols * 3,
                  static_cast<size_t>(p.cols) * 3,
                  out.px.data() + (static_cast<size_t>(r) * cols + offset) * 3);
    offset += p.cols + pad;
  }
  return out;
}

namespace {

struct RunContext {
  train::RunConfig cfg;
  data::Dataset dataset;
  std::filesystem::path run_dir;
};

RunContext load_run(const std::filesystem::path& run_dir) {
  RunContext ctx{train::RunConfig::load(run_dir / "config.json"), {}, run_dir};
  ctx.dataset = ctx.cfg.load_dataset();
  return ctx;
}

}  // namespace

int plot_feature_heatmaps(const std::filesystem::path& run_dir) {
  const RunContext ctx = load_run(run_dir);
  const auto out_dir = run_dir / "plots";
  std::filesystem::create_directories(out_dir);
  const int size = ctx.dataset.image_size;

  int written = 0;
  for (int i : ctx.dataset.split_indices("test")) {
    const auto& sample = ctx.dataset.samples[static_cast<size_t>(i)];
    const auto feat_path = run_dir / "features" / (sample.id + ".cgnt");
    if (!std::filesystem::exists(feat_path))
      throw std::runtime_error("missing saved features for sample " + sample.id);
    const TensorArchive archive = read_tensor_archive(feat_path);
    if (!archive_has(archive, "h_c"))
      throw std::runtime_error("no counterfactual features saved for sample " + sample.id);

    ImageRGB with_box = gray_to_rgb(sample.x_t);
    draw_rect(with_box, sample.bbox, 0, 200, 0);
    const std::vector<ImageRGB> panels = {
        gray_to_rgb(sample.x_t),
        with_box,
        gray_to_rgb(sample.x_r_mirrored),
        heatmap(channel_max(archive_get(archive, "h_t")), size),
        heatmap(channel_max(archive_get(archive, "h_r")), size),
        heatmap(channel_max(archive_get(archive, "h_c")), size),
    };
    write_png_rgb(out_dir / ("features_" + sample.id + ".png"), hstack(panels));
    ++written;
  }
  return written;
}

int plot_training_progression(const std::filesystem::path& run_dir, int every_n_epochs) {
  const RunContext ctx = load_run(run_dir);
  const auto out_dir = run_dir / "plots";
  std::filesystem::create_directories(out_dir);
  if (every_n_epochs < 1) throw std::invalid_argument("cadence must be >= 1");

  // Saved snapshots, keyed by epoch.
  std::map<int, std::filesystem::path> snapshots;
  for (const auto& entry : std::filesystem::directory_iterator(run_dir / "snapshots")) {
    const std::string name = entry.path().stem().string();  // epoch_XXXX
    if (name.rfind("epoch_", 0) == 0) snapshots[std::stoi(name.substr(6))] = entry.path();
  }
  if (snapshots.empty()) throw std::runtime_error("run has no CAM snapshots");

  std::vector<int> chosen;
  for (const auto& [epoch, path] : snapshots)
    if (epoch % every_n_epochs == 0) chosen.push_back(epoch);
  if (chosen.empty()) chosen.push_back(snapshots.rbegin()->first);

  // Tracked sample ids come from the first snapshot's entries.
  std::vector<std::string> ids;
  for (const auto& [name, t] : read_tensor_archive(snapshots.begin()->second)) {
    const auto slash = name.find('/');
    if (slash != std::string::npos) ids.push_back(name.substr(0, slash));
  }

  int written = 0;
  for (const auto& id : ids) {
    const auto& sample = ctx.dataset.by_id(id);
    ImageRGB with_box = gray_to_rgb(sample.x_t);
    draw_rect(with_box, sample.bbox, 0, 200, 0);
    std::vector<ImageRGB> panels = {with_box, gray_to_rgb(sample.x_r_mirrored)};
    for (int epoch : chosen) {
      const TensorArchive archive = read_tensor_archive(snapshots.at(epoch));
      panels.push_back(overlay(sample.x_t, archive_get(archive, id + "/cam"), 0.55));
    }
    write_png_rgb(out_dir / ("progression_" + id + ".png"), hstack(panels));
    ++written;
  }
  return written;
}

int plot_cam_overlays(const std::filesystem::path& run_dir) {
  const RunContext ctx = load_run(run_dir);
  const auto out_dir = run_dir / "plots";
  std::filesystem::create_directories(out_dir);

  int written = 0;
  for (int i : ctx.dataset.split_indices("test")) {
    const auto& sample = ctx.dataset.samples[static_cast<size_t>(i)];
    const auto feat_path = run_dir / "features" / (sample.id + ".cgnt");
    if (!std::filesystem::exists(feat_path))
      throw std::runtime_error("missing saved features for sample " + sample.id);
    const TensorArchive archive = read_tensor_archive(feat_path);
    const Tensor& cam = archive_get(archive, "cam");

    ImageRGB img = overlay(sample.x_t, cam, 0.5);
    draw_rect(img, sample.bbox, 0, 200, 0);
    try {
      draw_rect(img, attention::cam_to_bbox(cam, ctx.dataset.image_size), 230, 30, 30);
    } catch (const std::exception&) {
      // degenerate CAM: no predicted box to draw
    }
    write_png_rgb(out_dir / ("cam_" + sample.id + ".png"), img);
    ++written;
  }
  return written;
}

}  // namespace cgn::plots
