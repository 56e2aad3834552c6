#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cgn/attention.hpp"
#include "cgn/dataset.hpp"
#include "cgn/losses.hpp"
#include "cgn/metrics.hpp"
#include "cgn/models.hpp"
#include "cgn/synth.hpp"

namespace cgn::train {

enum class Variant {
  kFull,
  kVanilla,      // single-view classifier, no generation
  kSbf,          // bilateral features concatenated into the fusion layer
  kTfGan,        // generator input replaced by target features only
  kBfGan,        // generator input replaced by the plain bilateral average
  kAdainGan,     // adversarial + classification only
  kNoNe,         // full minus the negative embedding loss
  kNonFeedback,  // omega from the largest target-counterfactual distance
  kNoBilateral,  // target-only generation, no adversarial reference
  kNoFt,         // adversarial + negative embedding, no triplet
  kVariant1,     // region-masked adversarial objective
  kVariant2,     // triplet replaced by the direct feedback loss
};

Variant variant_from_name(const std::string& name);
std::string variant_name(Variant v);
const std::vector<Variant>& all_variants();

/// Which pieces a variant exercises.
struct VariantSpec {
  bool generator = false;
  bool adversarial = false;
  bool masked_adversarial = false;  // variant1
  bool triplet = false;
  bool direct_feedback = false;  // variant2 L_FC
  bool negative_embedding = false;
  bool omega_from_cam = false;
  bool omega_from_distance = false;
};
VariantSpec variant_spec(Variant v);

struct TrainConfig {
  double lr = 5e-5;
  int epochs = 50;
  int batch_size = 16;
  double alpha = 0.5;
  double beta = 1.0;
  std::uint64_t seed = 0;
  Variant variant = Variant::kFull;
  attention::OmegaVariant omega_variant = attention::OmegaVariant::kMinMax;
  int d_steps_per_g = 1;
  losses::DtcDenominator dtc_denominator = losses::DtcDenominator::kHwMinus1;
  int snapshot_every = 10;   // CAM snapshot cadence, in epochs
  int snapshot_samples = 4;  // test samples tracked in snapshots

  void validate() const;
};

/// A complete run description: model, schedule and data source.
struct RunConfig {
  models::ModelConfig model;
  TrainConfig train;
  std::optional<synth::SynthConfig> synth;  // in-memory data source
  std::string dataset_dir;                  // on-disk data source
  std::string out_dir;

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  data::Dataset load_dataset() const;
};

struct EpochStats {
  int epoch = 0;
  losses::LossBundle sums;  // summed over the epoch's samples
  double val_auc = 0.0;
};

struct RunRecord {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  double best_val_auc = 0.0;
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
  std::filesystem::path log_path;
  metrics::MetricsReport test_metrics;
};

/// Loss-path instrumentation, mainly for wiring tests.
struct PathCounters {
  std::int64_t generator_forwards = 0;
  std::int64_t discriminator_forwards = 0;
  std::int64_t triplet_evals = 0;
  std::int64_t negative_embedding_evals = 0;
};

struct EvalRow {
  std::string id;
  int label_pred = 0;
  int label_gt = 0;
  double iou = 0.0;
  bool correct = false;
  double p_malignant = 0.0;
};

struct EvalResult {
  std::vector<double> scores;
  std::vector<int> labels;
  double auc = 0.0;
  double localization_error = 0.0;
  std::vector<EvalRow> rows;
  metrics::FidQuartet quartet;
  double omega_inside_mean = 0.0;
  double omega_outside_mean = 0.0;
  metrics::MetricsReport report() const;
};

class Trainer {
public:
  Trainer(RunConfig cfg, const data::Dataset& dataset);

  /// Full training run; writes train_log.csv, checkpoints, CAM
  /// snapshots, saved test features and metrics.json under out_dir.
  RunRecord run();

  models::ModelBundle& bundle() { return *models_; }
  const PathCounters& counters() const { return counters_; }

private:
  struct ForwardOut;
  ForwardOut forward_batch(const std::vector<int>& idx, bool lesion_masks_needed);
  double validation_auc();

  RunConfig cfg_;
  const data::Dataset& data_;
  std::unique_ptr<models::ModelBundle> models_;
  PathCounters counters_;
};

/// Evaluation of a trained bundle on one split: AUC, the localization
/// protocol, pooled-feature FID quartet and omega mass statistics.
/// When `features_dir` is given, per-sample tensors (h_t, h_r, h_c, cam)
/// are archived there for the plotting commands.
EvalResult evaluate(models::ModelBundle& bundle, const RunConfig& cfg,
                    const data::Dataset& dataset, const std::string& split,
                    const std::filesystem::path& features_dir = {});

/// Section-4.4 protocol: extract pooled features for image couples,
/// batch them into groups, one FID per group.
std::vector<double> couple_fid_groups(const models::FeatureExtractor& extractor,
                                      const std::vector<std::pair<ImageU8, ImageU8>>& couples,
                                      int group_size = 20);

struct AblationRow {
  std::string variant;
  std::vector<double> seed_aucs;
  double median_auc = 0.0;
  bool failed = false;
  std::string error;
};

/// Trains every requested variant across the seeds on one fixed dataset
/// and writes ablation.csv. A failing variant is recorded and the grid
/// continues.
std::vector<AblationRow> run_ablation(const RunConfig& base, const data::Dataset& dataset,
                                      const std::vector<Variant>& variants,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::filesystem::path& out_dir);

/// Patient-stratified k-fold: retrains per fold, returns per-fold test
/// AUC values.
std::vector<double> kfold_aucs(const RunConfig& base, const data::Dataset& dataset, int k);

}  // namespace cgn::train
