// Command-line front end tying the library together: dataset synthesis,
// preprocessing, training, evaluation, the ablation grid, causal-model
// verification, distribution reports and figure emission.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <json.hpp>

#include "cgn/csv.hpp"
#include "cgn/dataset.hpp"
#include "cgn/metrics.hpp"
#include "cgn/models.hpp"
#include "cgn/plots.hpp"
#include "cgn/preprocess.hpp"
#include "cgn/scm.hpp"
#include "cgn/serialize.hpp"
#include "cgn/synth.hpp"
#include "cgn/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Relative output paths resolve under CGN_OUTPUT_ROOT when it is set.
fs::path resolve_out(const std::string& path) {
  fs::path p(path);
  const char* root = std::getenv("CGN_OUTPUT_ROOT");
  if (root && *root && p.is_relative()) return fs::path(root) / p;
  return p;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

int cmd_synth(const std::string& config_path, const std::string& out) {
  const auto cfg = cgn::synth::SynthConfig::from_json(slurp(config_path));
  const auto manifest = cgn::synth::generate_dataset(cfg, resolve_out(out));
  json j;
  j["samples"] = manifest.rows.size();
  j["out_dir"] = resolve_out(out).string();
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_preprocess(const std::string& in_dir, const std::string& out) {
  const fs::path out_dir = resolve_out(out);
  fs::create_directories(out_dir);
  int count = 0;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(in_dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    cgn::ImageU8 img;
    if (path.extension() == ".png") {
      img = cgn::read_png_gray(path);
    } else if (path.extension() == ".r14") {
      img = cgn::preprocess::map_14bit_to_8bit({cgn::read_raw14(path), 14});
    } else {
      continue;
    }
    cgn::write_png_gray(out_dir / (path.stem().string() + ".png"),
                        cgn::preprocess::pipeline(img));
    ++count;
  }
  json j;
  j["processed"] = count;
  j["out_dir"] = out_dir.string();
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_train(const std::string& config_path) {
  auto cfg = cgn::train::RunConfig::load(config_path);
  if (cfg.out_dir.empty()) throw std::runtime_error("run config must set out_dir");
  cfg.out_dir = resolve_out(cfg.out_dir).string();
  const auto dataset = cfg.load_dataset();
  cgn::train::Trainer trainer(cfg, dataset);
  const auto record = trainer.run();
  json j;
  j["best_epoch"] = record.best_epoch;
  j["best_val_auc"] = record.best_val_auc;
  j["test_auc"] = record.test_metrics.auc;
  j["out_dir"] = cfg.out_dir;
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_eval(const std::string& run_dir_s, const std::string& split,
             const std::string& checkpoint, bool localization) {
  const fs::path run_dir(run_dir_s);
  auto cfg = cgn::train::RunConfig::load(run_dir / "config.json");
  const auto dataset = cfg.load_dataset();
  cgn::Rng rng(0);
  cgn::models::ModelBundle bundle(cfg.model, rng);
  bundle.load(run_dir / ("checkpoint_" + checkpoint + ".cgnt"));
  const auto result = cgn::train::evaluate(bundle, cfg, dataset, split);
  std::cout << result.report().to_json() << '\n';
  if (localization) {
    cgn::CsvTable csv;
    csv.header = {"id", "label_pred", "label_gt", "iou", "correct"};
    for (const auto& row : result.rows)
      csv.rows.push_back({row.id, std::to_string(row.label_pred), std::to_string(row.label_gt),
                          cgn::format_double(row.iou), row.correct ? "1" : "0"});
    const auto path = run_dir / ("localization_" + split + ".csv");
    cgn::write_csv(path, csv);
  }
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out,
               const std::string& variants_csv, const std::string& seeds_csv) {
  auto cfg = cgn::train::RunConfig::load(config_path);
  const auto dataset = cfg.load_dataset();

  std::vector<cgn::train::Variant> variants;
  if (variants_csv.empty()) {
    for (const char* name : {"vanilla", "sbf", "tf_gan", "bf_gan", "adain_gan", "no_ft",
                             "non_feedback", "full", "variant1", "variant2"})
      variants.push_back(cgn::train::variant_from_name(name));
  } else {
    std::stringstream ss(variants_csv);
    std::string item;
    while (std::getline(ss, item, ',')) variants.push_back(cgn::train::variant_from_name(item));
  }
  std::vector<std::uint64_t> seeds;
  {
    std::stringstream ss(seeds_csv);
    std::string item;
    while (std::getline(ss, item, ',')) seeds.push_back(std::stoull(item));
  }
  const auto rows = cgn::train::run_ablation(cfg, dataset, variants, seeds, resolve_out(out));
  for (const auto& row : rows) {
    json j;
    j["variant"] = row.variant;
    if (row.failed) j["error"] = row.error;
    else j["median_auc"] = row.median_auc;
    std::cout << j.dump() << '\n';
  }
  return 0;
}

int cmd_verify_scm(const std::string& spec_path, double tolerance) {
  const auto spec = cgn::scm::ScmSpec::load(spec_path);
  const auto report = cgn::scm::verify_theorem1(spec, tolerance);
  json j;
  j["tv_eq2"] = report.tv_eq2;
  j["tv_eq3"] = report.tv_eq3;
  j["pass"] = report.pass;
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_fid_report(const std::string& run_dir_s, int couples, int group) {
  const fs::path run_dir(run_dir_s);
  auto cfg = cgn::train::RunConfig::load(run_dir / "config.json");
  const auto dataset = cfg.load_dataset();
  cgn::Rng rng(0);
  cgn::models::ModelBundle bundle(cfg.model, rng);
  bundle.load(run_dir / "checkpoint_best.cgnt");

  auto result = cgn::train::evaluate(bundle, cfg, dataset, "test");

  json j;
  j["fid"]["target_reference"] = result.quartet.target_reference;
  j["fid"]["counterfactual_reference"] = result.quartet.counterfactual_reference;
  j["fid"]["target_counterfactual"] = result.quartet.target_counterfactual;
  if (result.quartet.masked_available)
    j["fid"]["target_counterfactual_masked"] = result.quartet.target_counterfactual_masked;
  else
    j["fid"]["masked_notice"] = "ground-truth masks unavailable; masked distance skipped";

  if (cfg.synth) {
    auto healthy_cfg = *cfg.synth;
    healthy_cfg.seed += 7919;  // disjoint stream from the training data
    const auto healthy = cgn::synth::generate_healthy_pairs(healthy_cfg, couples);
    std::vector<std::pair<cgn::ImageU8, cgn::ImageU8>> unhealthy;
    auto unhealthy_cfg = *cfg.synth;
    unhealthy_cfg.seed += 104729;
    unhealthy_cfg.n_samples = couples;
    for (int i = 0; i < couples; ++i) {
      auto s = cgn::synth::generate_sample(unhealthy_cfg, i);
      unhealthy.emplace_back(std::move(s.x_T), std::move(s.x_R));
    }
    const auto h_fids = cgn::train::couple_fid_groups(bundle.extractor, healthy, group);
    const auto u_fids = cgn::train::couple_fid_groups(bundle.extractor, unhealthy, group);
    j["p_value"] = cgn::metrics::symmetric_prior_test(h_fids, u_fids);
  } else {
    j["p_value_notice"] = "run has no synth config; hypothesis test skipped";
  }
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_plot(const std::string& run_dir, const std::string& kind, int every_n) {
  int written = 0;
  if (kind == "feature-heatmaps") written = cgn::plots::plot_feature_heatmaps(run_dir);
  else if (kind == "progression") written = cgn::plots::plot_training_progression(run_dir, every_n);
  else if (kind == "cam-overlay") written = cgn::plots::plot_cam_overlays(run_dir);
  else throw CLI::ValidationError("--kind", "unknown plot kind: " + kind);
  json j;
  j["written"] = written;
  std::cout << j.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bilateral counterfactual generation toolkit"};
  app.require_subcommand(1);

  std::string synth_config, synth_out = "dataset";
  auto* synth = app.add_subcommand("synth", "Generate a synthetic bilateral dataset");
  synth->add_option("--config", synth_config, "SynthConfig JSON file")->required();
  synth->add_option("--out", synth_out, "Output directory");

  std::string pre_in, pre_out;
  auto* pre = app.add_subcommand("preprocess", "Normalize raw images (8-bit PNG or .r14)");
  pre->add_option("--in", pre_in, "Input directory")->required();
  pre->add_option("--out", pre_out, "Output directory")->required();

  std::string train_config;
  auto* train = app.add_subcommand("train", "Train one run from a config file");
  train->add_option("--config", train_config, "Run config JSON")->required();

  std::string eval_run, eval_split = "test", eval_ckpt = "best";
  bool eval_loc = false;
  auto* eval = app.add_subcommand("eval", "Evaluate a trained run");
  eval->add_option("--run", eval_run, "Run directory")->required();
  eval->add_option("--split", eval_split, "Dataset split");
  eval->add_option("--checkpoint", eval_ckpt, "best or final");
  eval->add_flag("--localization", eval_loc, "Also write per-sample localization CSV");

  std::string ab_config, ab_out = "ablation", ab_variants, ab_seeds = "0";
  auto* ablate = app.add_subcommand("ablate", "Train the variant grid and emit ablation.csv");
  ablate->add_option("--config", ab_config, "Base run config JSON")->required();
  ablate->add_option("--out", ab_out, "Output directory");
  ablate->add_option("--variants", ab_variants, "Comma-separated variant names (default grid)");
  ablate->add_option("--seeds", ab_seeds, "Comma-separated seeds");

  std::string scm_spec;
  double scm_tol = 1e-9;
  auto* verify = app.add_subcommand("verify-scm", "Check the counterfactual identities");
  verify->add_option("--spec", scm_spec, "SCM spec JSON file")->required();
  verify->add_option("--tolerance", scm_tol, "Total-variation tolerance");

  std::string fid_run;
  int fid_couples = 100, fid_group = 20;
  auto* fid = app.add_subcommand("fid-report", "Feature-distance quartet and hypothesis test");
  fid->add_option("--run", fid_run, "Run directory")->required();
  fid->add_option("--couples", fid_couples, "Couples per group for the hypothesis test");
  fid->add_option("--group", fid_group, "Couples per FID group");

  std::string plot_run, plot_kind = "feature-heatmaps";
  int plot_every = 10;
  auto* plot = app.add_subcommand("plot", "Emit figure-style images from a run");
  plot->add_option("--run", plot_run, "Run directory")->required();
  plot->add_option("--kind", plot_kind, "feature-heatmaps | progression | cam-overlay");
  plot->add_option("--every-n", plot_every, "Snapshot cadence for progression plots");

  if (argc <= 1) {
    std::cerr << app.help() << std::flush;
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return cmd_synth(synth_config, synth_out);
    if (*pre) return cmd_preprocess(pre_in, pre_out);
    if (*train) return cmd_train(train_config);
    if (*eval) return cmd_eval(eval_run, eval_split, eval_ckpt, eval_loc);
    if (*ablate) return cmd_ablate(ab_config, ab_out, ab_variants, ab_seeds);
    if (*verify) return cmd_verify_scm(scm_spec, scm_tol);
    if (*fid) return cmd_fid_report(fid_run, fid_couples, fid_group);
    if (*plot) return cmd_plot(plot_run, plot_kind, plot_every);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
