#include "cgn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <stdexcept>

#include "cgn/csv.hpp"
#include "cgn/preprocess.hpp"
#include "cgn/rng.hpp"
#include "cgn/serialize.hpp"

namespace cgn::train {

using ad::Var;
using nlohmann::json;

// --- variant tables ---------------------------------------------------------

namespace {

const std::vector<std::pair<Variant, const char*>>& variant_names() {
  static const std::vector<std::pair<Variant, const char*>> names = {
      {Variant::kFull, "full"},
      {Variant::kVanilla, "vanilla"},
      {Variant::kSbf, "sbf"},
      {Variant::kTfGan, "tf_gan"},
      {Variant::kBfGan, "bf_gan"},
      {Variant::kAdainGan, "adain_gan"},
      {Variant::kNoNe, "no_ne"},
      {Variant::kNonFeedback, "non_feedback"},
      {Variant::kNoBilateral, "no_bilateral"},
      {Variant::kNoFt, "no_ft"},
      {Variant::kVariant1, "variant1"},
      {Variant::kVariant2, "variant2"},
  };
  return names;
}

}  // namespace

Variant variant_from_name(const std::string& name) {
  for (const auto& [v, n] : variant_names())
    if (name == n) return v;
  throw std::invalid_argument("unknown variant: " + name);
}

std::string variant_name(Variant v) {
  for (const auto& [vv, n] : variant_names())
    if (vv == v) return n;
  return "full";
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> all = [] {
    std::vector<Variant> out;
    for (const auto& [v, n] : variant_names()) out.push_back(v);
    return out;
  }();
  return all;
}

VariantSpec variant_spec(Variant v) {
  VariantSpec s;
  switch (v) {
    case Variant::kVanilla:
    case Variant::kSbf:
      break;
    case Variant::kTfGan:
    case Variant::kBfGan:
    case Variant::kAdainGan:
      s.generator = true;
      s.adversarial = true;
      break;
    case Variant::kNoFt:
      s.generator = true;
      s.adversarial = true;
      s.negative_embedding = true;
      break;
    case Variant::kNoNe:
      s.generator = true;
      s.adversarial = true;
      s.triplet = true;
      s.omega_from_cam = true;
      break;
    case Variant::kNonFeedback:
      s.generator = true;
      s.adversarial = true;
      s.triplet = true;
      s.negative_embedding = true;
      s.omega_from_distance = true;
      break;
    case Variant::kNoBilateral:
      s.generator = true;
      s.triplet = true;
      s.negative_embedding = true;
      s.omega_from_cam = true;
      break;
    case Variant::kVariant1:
      s.generator = true;
      s.adversarial = true;
      s.masked_adversarial = true;
      s.negative_embedding = true;
      s.omega_from_cam = true;
      break;
    case Variant::kVariant2:
      s.generator = true;
      s.adversarial = true;
      s.direct_feedback = true;
      s.negative_embedding = true;
      s.omega_from_cam = true;
      break;
    case Variant::kFull:
      s.generator = true;
      s.adversarial = true;
      s.triplet = true;
      s.negative_embedding = true;
      s.omega_from_cam = true;
      break;
  }
  return s;
}

// --- configs -----------------------------------------------------------------

void TrainConfig::validate() const {
  if (lr <= 0.0) throw std::invalid_argument("lr must be > 0");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must be in [0,1]");
  if (beta < 0.0) throw std::invalid_argument("beta must be >= 0");
  if (d_steps_per_g < 0) throw std::invalid_argument("d_steps_per_g must be >= 0");
  if (snapshot_every < 1) throw std::invalid_argument("snapshot_every must be >= 1");
}

std::string RunConfig::to_json() const {
  json j;
  j["model"]["backbone"] = model.backbone_name();
  j["model"]["feature_channels"] = model.feature_channels;
  j["model"]["feature_hw"] = model.feature_hw;
  j["model"]["generator_blocks"] = model.generator_blocks;
  j["model"]["alpha"] = model.alpha;
  j["model"]["discriminator_depth"] = model.discriminator_depth;
  j["model"]["patch_discriminator"] = model.patch_discriminator;
  j["train"]["lr"] = train.lr;
  j["train"]["epochs"] = train.epochs;
  j["train"]["batch_size"] = train.batch_size;
  j["train"]["alpha"] = train.alpha;
  j["train"]["beta"] = train.beta;
  j["train"]["seed"] = train.seed;
  j["train"]["variant"] = variant_name(train.variant);
  j["train"]["omega_variant"] = attention::omega_variant_name(train.omega_variant);
  j["train"]["d_steps_per_g"] = train.d_steps_per_g;
  j["train"]["dtc_denominator"] = losses::dtc_denominator_name(train.dtc_denominator);
  j["train"]["snapshot_every"] = train.snapshot_every;
  j["train"]["snapshot_samples"] = train.snapshot_samples;
  if (synth) j["synth"] = json::parse(synth->to_json());
  if (!dataset_dir.empty()) j["dataset"] = dataset_dir;
  if (!out_dir.empty()) j["out_dir"] = out_dir;
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  RunConfig c;
  if (j.contains("model")) {
    const auto& m = j.at("model");
    c.model.backbone =
        models::ModelConfig::backbone_from_name(m.value("backbone", std::string("small-conv")));
    c.model.feature_channels = m.value("feature_channels", c.model.feature_channels);
    c.model.feature_hw = m.value("feature_hw", c.model.feature_hw);
    c.model.generator_blocks = m.value("generator_blocks", c.model.generator_blocks);
    c.model.alpha = m.value("alpha", c.model.alpha);
    c.model.discriminator_depth = m.value("discriminator_depth", c.model.discriminator_depth);
    c.model.patch_discriminator = m.value("patch_discriminator", c.model.patch_discriminator);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    c.train.lr = t.value("lr", c.train.lr);
    c.train.epochs = t.value("epochs", c.train.epochs);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.alpha = t.value("alpha", c.model.alpha);
    c.train.beta = t.value("beta", c.train.beta);
    c.train.seed = t.value("seed", c.train.seed);
    c.train.variant = variant_from_name(t.value("variant", std::string("full")));
    c.train.omega_variant =
        attention::omega_variant_from_name(t.value("omega_variant", std::string("minmax")));
    c.train.d_steps_per_g = t.value("d_steps_per_g", c.train.d_steps_per_g);
    c.train.dtc_denominator =
        losses::dtc_denominator_from_name(t.value("dtc_denominator", std::string("hw_minus_1")));
    c.train.snapshot_every = t.value("snapshot_every", c.train.snapshot_every);
    c.train.snapshot_samples = t.value("snapshot_samples", c.train.snapshot_samples);
  }
  if (j.contains("synth")) c.synth = synth::SynthConfig::from_json(j.at("synth").dump());
  c.dataset_dir = j.value("dataset", std::string());
  c.out_dir = j.value("out_dir", std::string());
  c.model.validate();
  c.train.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open run config: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(text);
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write run config: " + path.string());
  out << to_json() << '\n';
}

data::Dataset RunConfig::load_dataset() const {
  if (synth) return data::Dataset::from_config(*synth);
  if (!dataset_dir.empty()) return data::Dataset::load(dataset_dir);
  throw std::runtime_error("run config names neither a dataset directory nor a synth block");
}

// --- shared forward ----------------------------------------------------------

namespace {

struct ForwardPass {
  Var h_t, h_r, h_c;  // h_c empty for variants without generation
  models::ClassifierOut cls;
};

Tensor batch_labels(const data::Dataset& ds, const std::vector<int>& idx) {
  Tensor y({static_cast<int>(idx.size())});
  for (size_t i = 0; i < idx.size(); ++i)
    y[static_cast<std::int64_t>(i)] = ds.samples[static_cast<size_t>(idx[i])].label;
  return y;
}

ForwardPass forward_pass(models::ModelBundle& m, const RunConfig& cfg,
                         const data::Dataset& ds, const std::vector<int>& idx,
                         PathCounters* counters) {
  std::vector<const ImageU8*> t_imgs, r_imgs;
  for (int i : idx) {
    t_imgs.push_back(&ds.samples[static_cast<size_t>(i)].x_t);
    r_imgs.push_back(&ds.samples[static_cast<size_t>(i)].x_r_mirrored);
  }
  ForwardPass fp;
  fp.h_t = m.extractor.forward(models::images_to_tensor(t_imgs));
  fp.h_r = m.extractor.forward(models::images_to_tensor(r_imgs));

  const Variant variant = cfg.train.variant;
  const VariantSpec vs = variant_spec(variant);
  if (vs.generator) {
    if (counters) ++counters->generator_forwards;
    switch (variant) {
      case Variant::kTfGan:
      case Variant::kNoBilateral:
        fp.h_c = m.generator.forward(fp.h_t);
        break;
      case Variant::kBfGan:
        fp.h_c = m.generator.forward(ad::scale(ad::add(fp.h_t, fp.h_r), 0.5));
        break;
      default:
        fp.h_c = m.generator.generate(fp.h_t, fp.h_r, cfg.train.alpha);
        break;
    }
  }

  Var residual;
  if (variant == Variant::kVanilla)
    residual = ad::constant(Tensor(fp.h_t->value.shape()));
  else if (variant == Variant::kSbf)
    residual = fp.h_r;
  else
    residual = ad::sub(fp.h_t, fp.h_c);
  fp.cls = m.classifier.classify(residual, fp.h_t);
  return fp;
}

/// Per-sample omega maps packed as a constant (N,1,h,w) weight tensor.
Tensor build_omega(const models::ModelBundle& m, const ForwardPass& fp,
                   const RunConfig& cfg) {
  const VariantSpec vs = variant_spec(cfg.train.variant);
  const Tensor& fusion = fp.cls.fusion->value;
  const int n = fusion.dim(0), h = fusion.dim(2), w = fusion.dim(3);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor omega({n, 1, h, w});
  for (int i = 0; i < n; ++i) {
    Tensor cam({h, w});
    if (vs.omega_from_distance) {
      const Tensor& t = fp.h_t->value;
      const Tensor& c = fp.h_c->value;
      const int ch = t.dim(1);
      for (int k = 0; k < ch; ++k)
        for (std::int64_t p = 0; p < hw; ++p) {
          const double d = t[(static_cast<std::int64_t>(i) * ch + k) * hw + p] -
                           c[(static_cast<std::int64_t>(i) * ch + k) * hw + p];
          cam[p] += d * d;
        }
    } else {
      cam = m.classifier.cam(fusion, i, 1);
    }
    const auto om = attention::cam_to_omega(cam, cfg.train.omega_variant);
    std::copy_n(om.values.data(), hw, omega.data() + static_cast<std::int64_t>(i) * hw);
  }
  return omega;
}

double sum_value(const Var& per_sample) { return per_sample->value.sum(); }

}  // namespace

// --- Trainer -------------------------------------------------------------------

struct Trainer::ForwardOut {
  ForwardPass fp;
  Tensor omega;  // empty when unused
  Var total_g;
  losses::LossBundle sums;
};

Trainer::Trainer(RunConfig cfg, const data::Dataset& dataset)
    : cfg_(std::move(cfg)), data_(dataset) {
  cfg_.model.validate();
  cfg_.train.validate();
  Rng init_rng = Rng(cfg_.train.seed).fork(0x4d4f44u);
  models_ = std::make_unique<models::ModelBundle>(cfg_.model, init_rng);
}

Trainer::ForwardOut Trainer::forward_batch(const std::vector<int>& idx, bool /*unused*/) {
  ForwardOut out;
  out.fp = forward_pass(*models_, cfg_, data_, idx, &counters_);
  const VariantSpec vs = variant_spec(cfg_.train.variant);
  const Tensor y = batch_labels(data_, idx);

  std::vector<Var> g_terms;
  const Var lcls = losses::cls_loss(out.fp.cls.prob_malignant, y);
  g_terms.push_back(ad::sum_all(lcls));
  out.sums.l_cls = sum_value(lcls);

  if (vs.omega_from_cam || vs.omega_from_distance) out.omega = build_omega(*models_, out.fp, cfg_);

  if (vs.adversarial) {
    counters_.discriminator_forwards += 2;
    losses::AdvPair pair;
    if (vs.masked_adversarial) {
      pair = losses::region_masked_adversarial_losses(
          out.fp.h_c, ad::detach(out.fp.h_r), out.omega,
          [this](const Var& f) { return models_->discriminator.forward(f); });
    } else {
      const Var d_real = models_->discriminator.forward(ad::detach(out.fp.h_r));
      const Var d_fake = models_->discriminator.forward(out.fp.h_c);
      pair = losses::adversarial_losses(d_real, d_fake);
    }
    g_terms.push_back(ad::sum_all(pair.l_g));
    out.sums.l_ad_g = sum_value(pair.l_g);
    out.sums.l_ad_d = sum_value(pair.l_d);
  }

  if (vs.triplet) {
    ++counters_.triplet_evals;
    const Var dtc = losses::d_tc(out.fp.h_t, out.fp.h_c, out.omega, cfg_.train.dtc_denominator);
    const Var drc = cfg_.train.variant == Variant::kNoBilateral
                        ? losses::d_rc(out.fp.h_t, out.fp.h_c)
                        : losses::d_rc(out.fp.h_r, out.fp.h_c);
    const Var ft = losses::feedback_triplet(dtc, drc, cfg_.train.beta);
    g_terms.push_back(ad::sum_all(ft));
    out.sums.l_ft = sum_value(ft);
    out.sums.d_tc = sum_value(dtc);
    out.sums.d_rc = sum_value(drc);
  } else if (vs.direct_feedback) {
    const Var fc = losses::variant2_fc_loss(out.fp.h_t, out.fp.h_c, out.omega,
                                            cfg_.train.dtc_denominator);
    g_terms.push_back(ad::sum_all(fc));
    out.sums.l_ft = sum_value(fc);
    out.sums.d_tc = out.sums.l_ft;
  }

  if (vs.negative_embedding) {
    ++counters_.negative_embedding_evals;
    const Var zeros = ad::constant(Tensor(out.fp.h_c->value.shape()));
    const Var p_hc = models_->classifier.classify(zeros, out.fp.h_c).prob_malignant;
    const Var ne = losses::negative_embedding(p_hc);
    g_terms.push_back(ad::sum_all(ne));
    out.sums.l_ne = sum_value(ne);
  }

  out.total_g = g_terms[0];
  for (size_t i = 1; i < g_terms.size(); ++i) out.total_g = ad::add(out.total_g, g_terms[i]);
  out.sums.compute_totals();
  return out;
}

double Trainer::validation_auc() {
  const auto val_idx = data_.split_indices("val");
  if (val_idx.empty()) throw std::runtime_error("dataset has no validation split");
  std::vector<double> scores;
  std::vector<int> labels;
  for (size_t start = 0; start < val_idx.size(); start += static_cast<size_t>(cfg_.train.batch_size)) {
    std::vector<int> batch(val_idx.begin() + static_cast<long>(start),
                           val_idx.begin() +
                               static_cast<long>(std::min(start + cfg_.train.batch_size,
                                                          val_idx.size())));
    const ForwardPass fp = forward_pass(*models_, cfg_, data_, batch, &counters_);
    for (size_t i = 0; i < batch.size(); ++i) {
      scores.push_back(fp.cls.prob_malignant->value[static_cast<std::int64_t>(i)]);
      labels.push_back(data_.samples[static_cast<size_t>(batch[i])].label);
    }
  }
  return metrics::auc(scores, labels);
}

RunRecord Trainer::run() {
  namespace fs = std::filesystem;
  const fs::path out_dir = cfg_.out_dir.empty() ? fs::path("run") : fs::path(cfg_.out_dir);
  fs::create_directories(out_dir);
  fs::create_directories(out_dir / "snapshots");
  cfg_.save(out_dir / "config.json");

  const auto train_idx_all = data_.split_indices("train");
  if (train_idx_all.empty()) throw std::runtime_error("dataset has no training split");
  const auto test_idx = data_.split_indices("test");

  ad::Adam opt_g(models_->generator_side_params(), cfg_.train.lr);
  ad::Adam opt_d(models_->discriminator_params(), cfg_.train.lr);
  const VariantSpec vs = variant_spec(cfg_.train.variant);
  Rng master(cfg_.train.seed);

  const auto zero_all = [this] {
    models_->extractor.params().zero_grad();
    models_->generator.params().zero_grad();
    models_->classifier.params().zero_grad();
    models_->discriminator.params().zero_grad();
  };

  RunRecord record;
  TensorArchive best_params;
  CsvTable log;
  log.header = {"epoch", "step",  "l_cls",   "l_ad_g",  "l_ad_d", "l_ft",
                "l_ne",  "d_tc",  "d_rc",    "total_g", "total_d", "val_auc"};

  const int snapshot_n = std::min<int>(cfg_.train.snapshot_samples,
                                       static_cast<int>(test_idx.size()));

  for (int epoch = 1; epoch <= cfg_.train.epochs; ++epoch) {
    std::vector<int> order = train_idx_all;
    Rng epoch_rng = master.fork(1000u + static_cast<std::uint64_t>(epoch));
    epoch_rng.shuffle(order);

    EpochStats stats;
    stats.epoch = epoch;
    int step = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg_.train.batch_size)) {
      ++step;
      std::vector<int> batch(order.begin() + static_cast<long>(start),
                             order.begin() + static_cast<long>(std::min(
                                                 start + cfg_.train.batch_size, order.size())));
      ForwardOut fwd = forward_batch(batch, false);
      try {
        losses::joint_losses(std::span<const losses::LossBundle>(&fwd.sums, 1));
      } catch (const std::exception& e) {
        throw std::runtime_error("epoch " + std::to_string(epoch) + " step " +
                                 std::to_string(step) + ": " + e.what());
      }

      ad::backward(fwd.total_g);
      opt_g.step();
      zero_all();

      if (vs.adversarial) {
        for (int k = 0; k < cfg_.train.d_steps_per_g; ++k) {
          Var real_in = ad::constant(fwd.fp.h_r->value);
          Var fake_in = ad::constant(fwd.fp.h_c->value);
          if (vs.masked_adversarial) {
            real_in = ad::mul_bcast_map(real_in, fwd.omega);
            fake_in = ad::mul_bcast_map(fake_in, fwd.omega);
          }
          counters_.discriminator_forwards += 2;
          const auto pair = losses::adversarial_losses(
              models_->discriminator.forward(real_in), models_->discriminator.forward(fake_in));
          ad::backward(ad::sum_all(pair.l_d));
          opt_d.step();
          models_->discriminator.params().zero_grad();
        }
      }

      stats.sums.l_cls += fwd.sums.l_cls;
      stats.sums.l_ad_g += fwd.sums.l_ad_g;
      stats.sums.l_ad_d += fwd.sums.l_ad_d;
      stats.sums.l_ft += fwd.sums.l_ft;
      stats.sums.l_ne += fwd.sums.l_ne;
      stats.sums.d_tc += fwd.sums.d_tc;
      stats.sums.d_rc += fwd.sums.d_rc;

      log.rows.push_back({std::to_string(epoch), std::to_string(step),
                          format_double(fwd.sums.l_cls), format_double(fwd.sums.l_ad_g),
                          format_double(fwd.sums.l_ad_d), format_double(fwd.sums.l_ft),
                          format_double(fwd.sums.l_ne), format_double(fwd.sums.d_tc),
                          format_double(fwd.sums.d_rc), format_double(fwd.sums.total_g),
                          format_double(fwd.sums.total_d), ""});
    }
    stats.sums.compute_totals();
    stats.val_auc = validation_auc();
    if (!log.rows.empty()) log.rows.back().back() = format_double(stats.val_auc);
    record.epochs.push_back(stats);

    if (record.epochs.size() == 1 || stats.val_auc > record.best_val_auc) {
      record.best_val_auc = stats.val_auc;
      record.best_epoch = epoch;
      best_params = models_->to_archive();
    }

    if (snapshot_n > 0 &&
        (epoch % cfg_.train.snapshot_every == 0 || epoch == cfg_.train.epochs)) {
      std::vector<int> snap_idx(test_idx.begin(), test_idx.begin() + snapshot_n);
      const ForwardPass fp = forward_pass(*models_, cfg_, data_, snap_idx, &counters_);
      TensorArchive snap;
      for (int i = 0; i < snapshot_n; ++i) {
        const auto& id = data_.samples[static_cast<size_t>(snap_idx[static_cast<size_t>(i)])].id;
        snap.emplace_back(id + "/cam", models_->classifier.cam(fp.cls.fusion->value, i, 1));
      }
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04d.cgnt", epoch);
      write_tensor_archive(out_dir / "snapshots" / name, snap);
    }
  }

  record.log_path = out_dir / "train_log.csv";
  write_csv(record.log_path, log);

  record.final_checkpoint = out_dir / "checkpoint_final.cgnt";
  models_->save(record.final_checkpoint);
  record.best_checkpoint = out_dir / "checkpoint_best.cgnt";
  write_tensor_archive(record.best_checkpoint, best_params);

  // Test with the best-validation parameters.
  models_->load_archive(best_params);
  const EvalResult ev = evaluate(*models_, cfg_, data_, "test", out_dir / "features");
  record.test_metrics = ev.report();
  std::ofstream(out_dir / "metrics.json") << record.test_metrics.to_json() << '\n';

  CsvTable loc;
  loc.header = {"id", "label_pred", "label_gt", "iou", "correct", "p_malignant"};
  for (const auto& row : ev.rows)
    loc.rows.push_back({row.id, std::to_string(row.label_pred), std::to_string(row.label_gt),
                        format_double(row.iou), row.correct ? "1" : "0",
                        format_double(row.p_malignant)});
  write_csv(out_dir / "localization.csv", loc);
  return record;
}

// --- evaluation ------------------------------------------------------------------

namespace {

/// Fraction of lesion pixels per feature-map cell, (h,w) in [0,1].
Tensor downsample_mask(const ImageU8& mask, int h, int w) {
  Tensor out({h, w});
  const int cell_r = mask.rows / h, cell_c = mask.cols / w;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = 0; i < cell_r; ++i)
        for (int j = 0; j < cell_c; ++j) acc += mask.at(r * cell_r + i, c * cell_c + j);
      out.at({r, c}) = acc / (cell_r * cell_c);
    }
  return out;
}

std::vector<double> pooled_vector(const Tensor& features, int sample) {
  const int c = features.dim(1);
  const std::int64_t hw = static_cast<std::int64_t>(features.dim(2)) * features.dim(3);
  std::vector<double> v(static_cast<size_t>(c));
  for (int k = 0; k < c; ++k) {
    double acc = 0.0;
    const double* src = features.data() + (static_cast<std::int64_t>(sample) * c + k) * hw;
    for (std::int64_t p = 0; p < hw; ++p) acc += src[p];
    v[static_cast<size_t>(k)] = acc / static_cast<double>(hw);
  }
  return v;
}

std::vector<double> masked_pooled_vector(const Tensor& features, int sample,
                                         const Tensor& mask_frac) {
  const int c = features.dim(1), h = features.dim(2), w = features.dim(3);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  std::vector<std::int64_t> free_cells;
  for (std::int64_t p = 0; p < hw; ++p)
    if (mask_frac[p] < 1e-9) free_cells.push_back(p);
  if (free_cells.empty()) free_cells.push_back(0);
  std::vector<double> v(static_cast<size_t>(c));
  for (int k = 0; k < c; ++k) {
    const double* src = features.data() + (static_cast<std::int64_t>(sample) * c + k) * hw;
    double acc = 0.0;
    for (std::int64_t p : free_cells) acc += src[p];
    v[static_cast<size_t>(k)] = acc / static_cast<double>(free_cells.size());
  }
  return v;
}

}  // namespace

metrics::MetricsReport EvalResult::report() const {
  metrics::MetricsReport r;
  r.auc = auc;
  r.localization_error = localization_error;
  r.fids = quartet;
  return r;
}

EvalResult evaluate(models::ModelBundle& bundle, const RunConfig& cfg,
                    const data::Dataset& dataset, const std::string& split,
                    const std::filesystem::path& features_dir) {
  const auto idx = dataset.split_indices(split);
  if (idx.empty()) throw std::runtime_error("no samples in split " + split);
  const VariantSpec vs = variant_spec(cfg.train.variant);
  if (!features_dir.empty()) std::filesystem::create_directories(features_dir);

  EvalResult out;
  metrics::FeatureSet set_t{{}, "target"}, set_r{{}, "reference"}, set_c{{}, "counterfactual"};
  metrics::FeatureSet set_tm{{}, "masked-target"}, set_cm{{}, "masked-counterfactual"};
  std::vector<attention::LabeledBox> preds, truths;
  double inside_acc = 0.0, outside_acc = 0.0;
  int omega_samples = 0;

  for (size_t start = 0; start < idx.size(); start += static_cast<size_t>(cfg.train.batch_size)) {
    std::vector<int> batch(idx.begin() + static_cast<long>(start),
                           idx.begin() + static_cast<long>(std::min(
                                             start + cfg.train.batch_size, idx.size())));
    const ForwardPass fp = forward_pass(bundle, cfg, dataset, batch, nullptr);
    const Tensor& fusion = fp.cls.fusion->value;
    const int fh = fusion.dim(2), fw = fusion.dim(3);

    for (size_t i = 0; i < batch.size(); ++i) {
      const auto& sample = dataset.samples[static_cast<size_t>(batch[i])];
      const int n = static_cast<int>(i);
      const double p = fp.cls.prob_malignant->value[n];
      const int pred_label = p >= 0.5 ? 1 : 0;
      out.scores.push_back(p);
      out.labels.push_back(sample.label);

      const Tensor cam_pred = bundle.classifier.cam(fusion, n, pred_label);
      const Tensor cam_mal = bundle.classifier.cam(fusion, n, 1);
      BBox pred_box;
      try {
        pred_box = attention::cam_to_bbox(cam_pred, dataset.image_size);
      } catch (const std::exception&) {
        pred_box = BBox{0, 0, 1, 1};  // degenerate CAM, counts as a miss
      }
      preds.push_back({pred_label, pred_box});
      truths.push_back({sample.label, sample.bbox});

      EvalRow row;
      row.id = sample.id;
      row.label_pred = pred_label;
      row.label_gt = sample.label;
      row.iou = iou(pred_box, sample.bbox);
      row.correct = pred_label == sample.label && row.iou > 0.1;
      row.p_malignant = p;
      out.rows.push_back(row);

      set_t.vectors.push_back(pooled_vector(fp.h_t->value, n));
      set_r.vectors.push_back(pooled_vector(fp.h_r->value, n));
      if (fp.h_c) set_c.vectors.push_back(pooled_vector(fp.h_c->value, n));

      const Tensor mask_frac = downsample_mask(sample.lesion_mask, fh, fw);
      if (fp.h_c) {
        set_tm.vectors.push_back(masked_pooled_vector(fp.h_t->value, n, mask_frac));
        set_cm.vectors.push_back(masked_pooled_vector(fp.h_c->value, n, mask_frac));
      }

      const auto omega = attention::cam_to_omega(cam_mal, cfg.train.omega_variant);
      double win = 0.0, wout = 0.0, mass_in = 0.0, mass_out = 0.0;
      for (std::int64_t pix = 0; pix < omega.values.numel(); ++pix) {
        win += omega.values[pix] * mask_frac[pix];
        mass_in += mask_frac[pix];
        wout += omega.values[pix] * (1.0 - mask_frac[pix]);
        mass_out += 1.0 - mask_frac[pix];
      }
      if (mass_in > 0.0 && mass_out > 0.0) {
        inside_acc += win / mass_in;
        outside_acc += wout / mass_out;
        ++omega_samples;
      }

      if (!features_dir.empty()) {
        TensorArchive archive;
        const auto slice = [&](const Tensor& t) {
          const int c = t.dim(1);
          const std::int64_t chw = static_cast<std::int64_t>(c) * fh * fw;
          Tensor s({c, fh, fw});
          std::copy_n(t.data() + n * chw, chw, s.data());
          return s;
        };
        archive.emplace_back("h_t", slice(fp.h_t->value));
        archive.emplace_back("h_r", slice(fp.h_r->value));
        if (fp.h_c) archive.emplace_back("h_c", slice(fp.h_c->value));
        archive.emplace_back("cam", cam_mal);
        archive.emplace_back("cam_benign", bundle.classifier.cam(fusion, n, 0));
        write_tensor_archive(features_dir / (sample.id + ".cgnt"), archive);
      }
    }
  }

  out.auc = metrics::auc(out.scores, out.labels);
  out.localization_error = attention::top1_localization_error(preds, truths);
  if (vs.generator && set_c.count() >= 2)
    out.quartet = metrics::fid_quartet(set_t, set_r, set_c, set_tm, set_cm);
  if (omega_samples > 0) {
    out.omega_inside_mean = inside_acc / omega_samples;
    out.omega_outside_mean = outside_acc / omega_samples;
  }
  return out;
}

std::vector<double> couple_fid_groups(const models::FeatureExtractor& extractor,
                                      const std::vector<std::pair<ImageU8, ImageU8>>& couples,
                                      int group_size) {
  if (group_size < 2) throw std::invalid_argument("couple_fid_groups: group_size must be >= 2");
  std::vector<double> fids;
  const int n_groups = static_cast<int>(couples.size()) / group_size;
  for (int g = 0; g < n_groups; ++g) {
    metrics::FeatureSet targets{{}, "target"}, references{{}, "reference"};
    std::vector<const ImageU8*> t_imgs, r_imgs;
    std::vector<ImageU8> mirrored;
    mirrored.reserve(static_cast<size_t>(group_size));
    for (int i = 0; i < group_size; ++i) {
      const auto& [xt, xr] = couples[static_cast<size_t>(g * group_size + i)];
      t_imgs.push_back(&xt);
      mirrored.push_back(preprocess::mirror_reference(xr));
    }
    for (const auto& img : mirrored) r_imgs.push_back(&img);
    const ad::Var ht = extractor.forward(models::images_to_tensor(t_imgs));
    const ad::Var hr = extractor.forward(models::images_to_tensor(r_imgs));
    for (int i = 0; i < group_size; ++i) {
      targets.vectors.push_back(pooled_vector(ht->value, i));
      references.vectors.push_back(pooled_vector(hr->value, i));
    }
    fids.push_back(metrics::fid(targets, references));
  }
  return fids;
}

// --- ablation / folds ---------------------------------------------------------------

std::vector<AblationRow> run_ablation(const RunConfig& base, const data::Dataset& dataset,
                                      const std::vector<Variant>& variants,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<AblationRow> rows;
  for (Variant v : variants) {
    AblationRow row;
    row.variant = variant_name(v);
    for (std::uint64_t seed : seeds) {
      RunConfig cfg = base;
      cfg.train.variant = v;
      cfg.train.seed = seed;
      cfg.out_dir = (out_dir / (row.variant + "_s" + std::to_string(seed))).string();
      try {
        Trainer trainer(cfg, dataset);
        const RunRecord record = trainer.run();
        row.seed_aucs.push_back(record.test_metrics.auc);
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
        break;
      }
    }
    if (!row.failed && !row.seed_aucs.empty()) {
      std::vector<double> sorted = row.seed_aucs;
      std::sort(sorted.begin(), sorted.end());
      row.median_auc = sorted[sorted.size() / 2];
      if (sorted.size() % 2 == 0)
        row.median_auc = 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
    }
    rows.push_back(row);

    CsvTable csv;  // rewritten after every variant so partial grids are inspectable
    csv.header = {"variant", "median_auc", "seed_aucs", "status"};
    for (const auto& r : rows) {
      std::string aucs;
      for (size_t i = 0; i < r.seed_aucs.size(); ++i)
        aucs += (i ? ";" : "") + format_double(r.seed_aucs[i]);
      csv.rows.push_back({r.variant, r.failed ? "" : format_double(r.median_auc), aucs,
                          r.failed ? "failed: " + r.error : "ok"});
    }
    write_csv(out_dir / "ablation.csv", csv);
  }
  return rows;
}

std::vector<double> kfold_aucs(const RunConfig& base, const data::Dataset& dataset, int k) {
  const auto folds =
      data::fold_assignment(static_cast<int>(dataset.samples.size()), k, base.train.seed);
  std::vector<double> aucs;
  for (int f = 0; f < k; ++f) {
    data::Dataset fold_data = dataset;
    for (size_t i = 0; i < fold_data.samples.size(); ++i) {
      const int fi = folds[i];
      fold_data.samples[i].split =
          fi == f ? "test" : (fi == (f + 1) % k ? "val" : "train");
    }
    RunConfig cfg = base;
    cfg.out_dir = (std::filesystem::path(base.out_dir.empty() ? "kfold" : base.out_dir) /
                   ("fold" + std::to_string(f)))
                      .string();
    Trainer trainer(cfg, fold_data);
    aucs.push_back(trainer.run().test_metrics.auc);
  }
  return aucs;
}

}  // namespace cgn::train
