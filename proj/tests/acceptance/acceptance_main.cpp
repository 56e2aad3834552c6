// End-to-end acceptance suite. Each criterion prints one line:
//   [PASS] criterion N: <name> (<detail>)
// The process exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <vector>

#include "cgn/attention.hpp"
#include "cgn/losses.hpp"
#include "cgn/metrics.hpp"
#include "cgn/models.hpp"
#include "cgn/preprocess.hpp"
#include "cgn/rng.hpp"
#include "cgn/scm.hpp"
#include "cgn/synth.hpp"
#include "cgn/trainer.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace cgn;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run_criterion(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome outcome;
  try {
    outcome = body();
  } catch (const std::exception& e) {
    outcome.pass = false;
    outcome.detail = std::string("exception: ") + e.what();
  }
  const double secs =
      std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count() /
      1000.0;
  std::ostringstream line;
  line << (outcome.pass ? "[PASS]" : "[FAIL]") << " criterion " << id << ": " << name << " ("
       << outcome.detail << "; " << std::fixed << std::setprecision(1) << secs << "s)";
  std::cout << line.str() << std::endl;
  if (!outcome.pass) ++failures;
}

fs::path workspace() {
  const char* env = std::getenv("CGN_ACCEPTANCE_DIR");
  const fs::path dir = env && *env ? fs::path(env) : fs::path("acceptance_work");
  fs::create_directories(dir);
  return dir;
}

// Shared configuration of the trained experiment (criteria 3, 4, 6).
synth::SynthConfig acceptance_synth() {
  synth::SynthConfig s;
  s.n_samples = 2000;
  s.seed = 20240811;
  return s;
}

train::RunConfig acceptance_run(const fs::path& out_dir) {
  train::RunConfig cfg;
  cfg.model.feature_channels = 8;
  cfg.model.feature_hw = 7;
  cfg.model.generator_blocks = 9;
  cfg.train.lr = 4e-4;  // random init instead of pretrained weights
  cfg.train.epochs = 50;
  cfg.train.batch_size = 16;
  cfg.train.seed = 0;
  cfg.synth = acceptance_synth();
  cfg.out_dir = out_dir.string();
  return cfg;
}

const std::vector<std::uint64_t> kSeeds = {0, 1, 2};

struct TrainedGrid {
  std::vector<train::AblationRow> rows;
  bool available = false;

  double median(const std::string& variant) const {
    for (const auto& row : rows)
      if (row.variant == variant && !row.failed) return row.median_auc;
    throw std::runtime_error("variant " + variant + " missing or failed");
  }
  /// Run directory of the seed achieving the median AUC.
  fs::path median_run_dir(const fs::path& grid_dir, const std::string& variant) const {
    for (const auto& row : rows) {
      if (row.variant != variant) continue;
      std::vector<std::pair<double, std::uint64_t>> scored;
      for (size_t i = 0; i < row.seed_aucs.size(); ++i)
        scored.emplace_back(row.seed_aucs[i], kSeeds[i]);
      std::sort(scored.begin(), scored.end());
      const auto seed = scored[scored.size() / 2].second;
      return grid_dir / (variant + "_s" + std::to_string(seed));
    }
    throw std::runtime_error("variant " + variant + " not trained");
  }
};

TrainedGrid grid;

train::EvalResult evaluate_run_dir(const fs::path& run_dir, const std::string& split) {
  auto cfg = train::RunConfig::load(run_dir / "config.json");
  const auto dataset = cfg.load_dataset();
  Rng rng(0);
  models::ModelBundle bundle(cfg.model, rng);
  bundle.load(run_dir / "checkpoint_best.cgnt");
  return train::evaluate(bundle, cfg, dataset, split);
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// --- criteria ------------------------------------------------------------

Outcome criterion1_theorem() {
  Rng rng(0xC1);
  double worst_eq2 = 0.0, worst_eq3 = 0.0, weakest_control = 1e300;
  for (int trial = 0; trial < 20; ++trial) {
    const auto spec = scm::random_compliant_spec(rng);
    const auto report = scm::verify_theorem1(spec, 1e-9);
    worst_eq2 = std::max(worst_eq2, report.tv_eq2);
    worst_eq3 = std::max(worst_eq3, report.tv_eq3);
    if (!report.pass)
      return {false, "compliant spec failed: tv_eq2=" + std::to_string(report.tv_eq2)};

    const auto control = scm::break_shared_h(spec, rng);
    const auto broken = scm::verify_theorem1(control, 1e-9);
    weakest_control = std::min(weakest_control, broken.tv_eq2);
    if (broken.tv_eq2 <= 1e-3)
      return {false, "control stayed within 1e-3: tv_eq2=" + std::to_string(broken.tv_eq2)};
  }
  if (worst_eq3 != 0.0) return {false, "tv_eq3 nonzero"};
  std::ostringstream os;
  os << "20 compliant specs: max tv_eq2=" << worst_eq2 << ", tv_eq3=0 exactly; "
     << "20 controls: min tv_eq2=" << weakest_control;
  return {true, os.str()};
}

Outcome criterion2_loss_oracles() {
  Rng rng(0xC2);
  // Chamfer vs exhaustive search for h*w <= 16.
  for (int trial = 0; trial < 40; ++trial) {
    const int h = 1 + rng.uniform_int(4), w = 1 + rng.uniform_int(4);
    const int c = 1 + rng.uniform_int(4);
    Tensor a({1, c, h, w}), b({1, c, h, w});
    for (std::int64_t i = 0; i < a.numel(); ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
    }
    const double got = losses::d_rc(ad::constant(a), ad::constant(b))->value[0];
    if (got != oracle::chamfer_bruteforce(a, b))
      return {false, "chamfer mismatch vs exhaustive search"};
  }

  // Hand-computed d_tc fixture.
  {
    const ad::Var ht = ad::constant(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
    const ad::Var hc = ad::constant(Tensor({1, 1, 2, 2}, {1, 0, 3, 0}));
    const double v = losses::d_tc(ht, hc, Tensor({1, 1, 2, 2}, {1, 0, 1, 0}))->value[0];
    if (std::fabs(v - 20.0 / 3.0) > 1e-12)
      return {false, "d_tc fixture: got " + std::to_string(v)};
  }

  // AdaIN moment matching within 1e-4 on channels with sigma >= 1e-3.
  for (int trial = 0; trial < 25; ++trial) {
    Tensor h({1, 4, 6, 6}), s({1, 4, 6, 6});
    for (std::int64_t i = 0; i < h.numel(); ++i) {
      h[i] = rng.normal(rng.uniform(-1, 1), 1.0);
      s[i] = rng.normal(rng.uniform(-1, 1), 1.0);
    }
    const ad::Var out = models::adain(ad::constant(h), ad::constant(s));
    const int hw = 36;
    for (int c = 0; c < 4; ++c) {
      double ms = 0, mo = 0;
      for (int p = 0; p < hw; ++p) {
        ms += s[c * hw + p];
        mo += out->value[c * hw + p];
      }
      ms /= hw;
      mo /= hw;
      double vs = 0, vo = 0;
      for (int p = 0; p < hw; ++p) {
        vs += (s[c * hw + p] - ms) * (s[c * hw + p] - ms);
        vo += (out->value[c * hw + p] - mo) * (out->value[c * hw + p] - mo);
      }
      if (std::fabs(mo - ms) > 1e-4 ||
          std::fabs(std::sqrt(vo / hw) - std::sqrt(vs / hw)) > 1e-4)
        return {false, "adain moments off on trial " + std::to_string(trial)};
    }
  }

  // Every loss against central finite differences on 4-channel 4x4 toys.
  double worst = 0.0;
  {
    ad::Var ht = ad::leaf(Tensor({1, 4, 4, 4}), true);
    ad::Var hc = ad::leaf(Tensor({1, 4, 4, 4}), true);
    ad::Var hr = ad::leaf(Tensor({1, 4, 4, 4}), true);
    for (std::int64_t i = 0; i < ht->value.numel(); ++i) {
      ht->value[i] = rng.normal();
      hc->value[i] = rng.normal();
      hr->value[i] = rng.normal();
    }
    Tensor omega({1, 1, 4, 4});
    for (std::int64_t i = 0; i < omega.numel(); ++i) omega[i] = rng.uniform();

    models::ModelConfig dcfg;
    dcfg.feature_channels = 4;
    Rng init(0xD15C);
    models::Discriminator disc(dcfg, init);

    const std::vector<std::function<ad::Var()>> builders = {
        [&] { return ad::sum_all(losses::d_tc(ht, hc, omega)); },
        [&] { return ad::sum_all(losses::d_rc(hr, hc)); },
        [&] {
          return ad::sum_all(
              losses::feedback_triplet(losses::d_tc(ht, hc, omega), losses::d_rc(hr, hc), 0.5));
        },
        [&] { return ad::sum_all(losses::variant2_fc_loss(ht, hc, omega)); },
        [&] {
          return ad::sum_all(losses::cls_loss(
              ad::sigmoid(ad::reshape(ad::sum_spatial(ad::mul(ht, hc)), {1, 4})),
              Tensor({1, 4}, {1.0, 0.0, 1.0, 0.0})));
        },
        [&] {
          return ad::sum_all(losses::negative_embedding(
              ad::sigmoid(ad::reshape(ad::sum_all(ad::mul(hc, hc)), {1}))));
        },
        [&] {
          const auto pair = losses::adversarial_losses(disc.forward(hr), disc.forward(hc));
          return ad::sum_all(ad::add(pair.l_d, pair.l_g));
        },
        [&] {
          const auto pair = losses::region_masked_adversarial_losses(
              hc, hr, omega, [&disc](const ad::Var& f) { return disc.forward(f); });
          return ad::sum_all(ad::add(pair.l_d, pair.l_g));
        },
    };
    for (const auto& build : builders) {
      const auto r = gradcheck::check(build, {ht, hc, hr}, 1e-6);
      worst = std::max(worst, r.max_rel_error);
      if (r.max_rel_error >= 1e-3)
        return {false, "gradient check exceeded 1e-3: " + std::to_string(r.max_rel_error)};
    }
  }
  std::ostringstream os;
  os << "chamfer exact on 40 instances; d_tc = 20/3; adain moments <= 1e-4; worst gradient "
     << "error " << worst;
  return {true, os.str()};
}

Outcome criterion3_ordering() {
  const fs::path grid_dir = workspace() / "grid";
  const auto base = acceptance_run(grid_dir / "base");
  const auto dataset = base.load_dataset();
  using train::Variant;
  grid.rows = train::run_ablation(base, dataset,
                                  {Variant::kFull, Variant::kVanilla, Variant::kNonFeedback,
                                   Variant::kNoNe, Variant::kVariant1, Variant::kVariant2},
                                  kSeeds, grid_dir);
  grid.available = true;

  const double full = grid.median("full");
  const double vanilla = grid.median("vanilla");
  const double non_feedback = grid.median("non_feedback");
  const double no_ne = grid.median("no_ne");
  const double v1 = grid.median("variant1");
  const double v2 = grid.median("variant2");

  std::ostringstream os;
  os << "median AUC: full=" << full << " vanilla=" << vanilla << " non_feedback=" << non_feedback
     << " no_ne=" << no_ne << " variant1=" << v1 << " variant2=" << v2;
  const bool pass = full >= vanilla + 0.03 && full >= non_feedback && full >= no_ne &&
                    full >= v1 && full >= v2;
  return {pass, os.str()};
}

Outcome criterion4_fid_quartet() {
  if (!grid.available) return {false, "trained grid unavailable"};
  const auto run_dir = grid.median_run_dir(workspace() / "grid", "full");
  const auto result = evaluate_run_dir(run_dir, "test");
  const auto& q = result.quartet;
  if (!q.masked_available) return {false, "masked distance unavailable"};
  std::ostringstream os;
  os << "t-r=" << q.target_reference << " c-r=" << q.counterfactual_reference
     << " t-c=" << q.target_counterfactual << " masked t-c=" << q.target_counterfactual_masked;
  const bool pass = q.target_counterfactual_masked < 0.9 * q.target_counterfactual &&
                    q.counterfactual_reference < 0.9 * q.target_reference;
  return {pass, os.str()};
}

Outcome criterion5_hypothesis_test() {
  // Section 4.4 protocol on a neutral embedding: a fixed random-weight
  // extractor, independent of any trained run.
  synth::SynthConfig s = acceptance_synth();
  s.seed = 900913;
  const auto healthy = synth::generate_healthy_pairs(s, 100);
  std::vector<std::pair<ImageU8, ImageU8>> unhealthy;
  synth::SynthConfig u = s;
  u.seed = 900914;
  u.n_samples = 100;
  for (int i = 0; i < 100; ++i) {
    auto sample = synth::generate_sample(u, i);
    unhealthy.emplace_back(std::move(sample.x_T), std::move(sample.x_R));
  }
  models::ModelConfig mc;
  mc.feature_channels = 8;
  mc.feature_hw = 7;
  Rng init(0xE3B);
  models::FeatureExtractor extractor(mc, init);
  const auto h_fids = train::couple_fid_groups(extractor, healthy, 20);
  const auto u_fids = train::couple_fid_groups(extractor, unhealthy, 20);
  const double p = metrics::symmetric_prior_test(h_fids, u_fids);
  std::ostringstream os;
  os << "one-sided p=" << p << " on 5+5 FID groups of 20 couples";
  return {p < 0.05, os.str()};
}

Outcome criterion6_localization() {
  if (!grid.available) return {false, "trained grid unavailable"};
  const auto full_dir = grid.median_run_dir(workspace() / "grid", "full");
  const auto vanilla_dir = grid.median_run_dir(workspace() / "grid", "vanilla");
  const auto full = evaluate_run_dir(full_dir, "test");
  const auto vanilla = evaluate_run_dir(vanilla_dir, "test");
  std::ostringstream os;
  os << "loc error full=" << full.localization_error
     << " vanilla=" << vanilla.localization_error << "; omega inside=" << full.omega_inside_mean
     << " outside=" << full.omega_outside_mean;
  const bool pass = full.localization_error <= vanilla.localization_error &&
                    full.omega_inside_mean > full.omega_outside_mean;
  return {pass, os.str()};
}

Outcome criterion7_determinism() {
  const fs::path dir = workspace() / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);

  train::RunConfig cfg;
  cfg.model.feature_channels = 8;
  cfg.model.feature_hw = 7;
  cfg.train.epochs = 2;
  cfg.train.lr = 5e-4;
  cfg.train.variant = train::Variant::kFull;
  cfg.train.seed = 11;
  synth::SynthConfig s;
  s.n_samples = 30;
  s.seed = 99;
  cfg.synth = s;
  cfg.out_dir = (dir / "run").string();
  cfg.save(dir / "config.json");

  const std::string cli = CGN_CLI_PATH;
  const auto run_once = [&](const std::string& tag) {
    const std::string cmd = cli + " train --config " + (dir / "config.json").string() + " > " +
                            (dir / ("train_" + tag + ".txt")).string() + " 2>&1";
    if (std::system(cmd.c_str()) != 0) throw std::runtime_error("train command failed");
    const std::string eval_cmd = cli + " eval --run " + (dir / "run").string() + " > " +
                                 (dir / ("eval_" + tag + ".txt")).string() + " 2>&1";
    if (std::system(eval_cmd.c_str()) != 0) throw std::runtime_error("eval command failed");
  };
  run_once("a");
  const std::string metrics_a = file_bytes(dir / "run" / "metrics.json");
  const std::string ckpt_a = file_bytes(dir / "run" / "checkpoint_best.cgnt");
  const std::string eval_a = file_bytes(dir / "eval_a.txt");
  fs::remove_all(dir / "run");
  run_once("b");
  const bool same = metrics_a == file_bytes(dir / "run" / "metrics.json") &&
                    ckpt_a == file_bytes(dir / "run" / "checkpoint_best.cgnt") &&
                    eval_a == file_bytes(dir / "eval_b.txt");
  return {same, same ? "train+eval repeated bit-identically" : "artifacts differ between runs"};
}

Outcome criterion8_brute_force_oracles() {
  Rng rng(0xC8);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 5 + rng.uniform_int(120);
    std::vector<double> scores;
    std::vector<int> labels;
    bool has0 = false, has1 = false;
    for (int i = 0; i < n; ++i) {
      scores.push_back(rng.uniform_int(8) / 8.0);
      labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
      has0 = has0 || labels.back() == 0;
      has1 = has1 || labels.back() == 1;
    }
    if (!has0 || !has1) {
      labels[0] = 0;
      labels[1] = 1;
    }
    if (metrics::auc(scores, labels) != oracle::auc_bruteforce(scores, labels))
      return {false, "auc mismatch on trial " + std::to_string(trial)};
  }
  for (int trial = 0; trial < 100; ++trial) {
    ImageU8 img(12, 12);
    const int m0 = rng.uniform_int(256), m1 = rng.uniform_int(256);
    bool constant = true;
    for (auto& v : img.px) {
      v = static_cast<std::uint8_t>(
          std::clamp((rng.bernoulli(0.5) ? m0 : m1) + rng.uniform_int(31) - 15, 0, 255));
      constant = constant && v == img.px[0];
    }
    if (constant) continue;
    if (preprocess::otsu_threshold(img) != oracle::otsu_bruteforce(img))
      return {false, "otsu mismatch on trial " + std::to_string(trial)};
  }
  return {true, "auc and otsu equal their brute-force oracles on 100 instances each"};
}

}  // namespace

int main() {
  std::cout << "acceptance workspace: " << fs::absolute(workspace()).string() << std::endl;
  run_criterion(1, "counterfactual identities verified by exact enumeration",
                criterion1_theorem);
  run_criterion(2, "loss implementations match their oracles", criterion2_loss_oracles);
  run_criterion(3, "ablation ordering replicated on synthetic data", criterion3_ordering);
  run_criterion(4, "feature-distance quartet ordering", criterion4_fid_quartet);
  run_criterion(5, "symmetric-prior hypothesis test", criterion5_hypothesis_test);
  run_criterion(6, "localization beats the single-view baseline", criterion6_localization);
  run_criterion(7, "bit-identical reruns under a fixed seed", criterion7_determinism);
  run_criterion(8, "brute-force oracle equality for AUC and Otsu",
                criterion8_brute_force_oracles);
  if (failures > 0) {
    std::cout << failures << " criterion(s) failed" << std::endl;
    return 1;
  }
  std::cout << "all criteria passed" << std::endl;
  return 0;
}
