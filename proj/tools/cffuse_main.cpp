// Command-line driver: gen-data, train, eval, ablate, filters, visualize.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "cffuse/config.hpp"
#include "cffuse/errors.hpp"
#include "cffuse/experiment.hpp"
#include "cffuse/train.hpp"

namespace fs = std::filesystem;
using namespace cffuse;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Common {
  std::string config;
  std::vector<std::string> overrides;
};

RunConfig load_run(const Common& c) {
  Config cfg = c.config.empty() ? Config{} : Config::load(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  auto run = RunConfig::from(cfg);
  apply_seed_override(run);
  return run;
}

std::vector<Scene> load_corpus(const RunConfig& run) {
  if (!fs::exists(fs::path(run.corpus_dir) / "scenes.csv")) {
    throw FormatError("corpus not found in " + run.corpus_dir + " (run gen-data first)");
  }
  return read_corpus(run.corpus_dir);
}

std::vector<std::size_t> select(const std::string& split, std::size_t count, double train_fraction) {
  const auto s = split_by_index(count, train_fraction);
  if (split == "train") return s.train;
  if (split == "test") return s.test;
  std::vector<std::size_t> all(count);
  for (std::size_t i = 0; i < count; ++i) all[i] = i;
  return all;
}

int cmd_gen_data(const RunConfig& run) {
  const auto scenes = generate_corpus(run.corpus);
  write_corpus(run.corpus_dir, scenes);
  std::cout << "wrote " << scenes.size() << " scenes to " << run.corpus_dir << '\n';
  return kOk;
}

int cmd_train(const RunConfig& run, const std::string& resume, std::size_t max_steps) {
  const auto scenes = load_corpus(run);
  const auto split = split_by_index(scenes.size(), run.train_fraction);
  fs::create_directories(run.out_dir);
  {
    std::ofstream os(fs::path(run.out_dir) / "config.txt");
    os << run.to_config().serialize();
  }
  RsdetModel model(run.model);
  Trainer trainer(model, run.train, run.seed, split.train);
  if (!resume.empty()) trainer.load_checkpoint(resume);
  LossLog log((fs::path(run.out_dir) / "loss.csv").string(), !resume.empty());
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t taken = 0;
  while (!trainer.done() && (max_steps == 0 || taken < max_steps)) {
    const auto rec = trainer.step(scenes);
    log.write(rec);
    ++taken;
    if (rec.step % trainer.steps_per_epoch() == 0) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cout << "epoch " << rec.epoch + 1 << " step " << rec.step << " loss " << rec.report.total << " ("
                << secs << " s)\n";
    }
  }
  const auto ckpt = (fs::path(run.out_dir) / "checkpoint.cfck").string();
  trainer.save_checkpoint(ckpt);
  std::cout << "checkpoint " << ckpt << " at step " << trainer.completed_steps() << '\n';
  return kOk;
}

RsdetModel load_model(const RunConfig& run, const std::string& checkpoint) {
  RsdetModel model(run.model);
  load_model_weights(model, checkpoint);
  return model;
}

int cmd_eval(const RunConfig& run, const std::string& checkpoint, const std::string& split, bool pr_curve) {
  const auto scenes = load_corpus(run);
  const auto model = load_model(run, checkpoint);
  const auto indices = select(split, scenes.size(), run.train_fraction);
  const auto result = evaluate_model(model, scenes, indices, run.eval);
  fs::create_directories(run.out_dir);
  write_metrics_csv((fs::path(run.out_dir) / "metrics.csv").string(), result.metrics);
  write_detections_csv((fs::path(run.out_dir) / "detections.csv").string(), result.detections);
  if (pr_curve) write_pr_curve_csv((fs::path(run.out_dir) / "pr_curve.csv").string(), result, run.model.classes);
  std::cout << "mAP50 " << result.metrics.map50 << " mAP75 " << result.metrics.map75 << " mAP " << result.metrics.map
            << " MR-2 " << result.metrics.mr2 << '\n';
  return kOk;
}

int cmd_ablate(const RunConfig& run) {
  const auto scenes = load_corpus(run);
  fs::create_directories(run.out_dir);
  const auto result = run_ablation(run, scenes, [](const AblationCell& c) {
    std::cout << to_string(c.variant) << " seed " << c.seed << " mAP50 " << c.metrics.map50 << '\n' << std::flush;
  });
  write_ablation_csv((fs::path(run.out_dir) / "ablation.csv").string(), result.rows);
  write_ablation_cells_csv((fs::path(run.out_dir) / "ablation_cells.csv").string(), result.cells);
  for (const auto& r : result.rows) {
    std::cout << to_string(r.variant) << " mAP50 " << r.map50_mean << " +- " << r.map50_std << '\n';
  }
  return kOk;
}

const Scene& pick_scene(const std::vector<Scene>& scenes, std::size_t index) {
  if (index >= scenes.size()) {
    throw FormatError("scene " + std::to_string(index) + " out of range (corpus has " + std::to_string(scenes.size()) +
                      ")");
  }
  return scenes[index];
}

int cmd_filters(const RunConfig& run, const std::string& checkpoint, std::size_t scene, const std::string& modality) {
  const auto scenes = load_corpus(run);
  const auto model = load_model(run, checkpoint);
  const std::vector<std::string> mods = modality == "both" ? std::vector<std::string>{"rgb", "ir"}
                                                           : std::vector<std::string>{modality};
  for (const auto& m : mods) {
    for (const auto& p : export_filters(model, pick_scene(scenes, scene), m, run.out_dir)) std::cout << p << '\n';
  }
  return kOk;
}

int cmd_visualize(const RunConfig& run, const std::string& checkpoint, std::size_t scene) {
  const auto scenes = load_corpus(run);
  const auto model = load_model(run, checkpoint);
  const Scene& s = pick_scene(scenes, scene);
  for (const auto& p : export_visuals(model, s, run.out_dir)) std::cout << p << '\n';
  if (run.model.use_rsr) {
    for (const char* m : {"rgb", "ir"}) {
      for (const auto& p : export_filters(model, s, m, run.out_dir)) std::cout << p << '\n';
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coarse-to-fine RGB-IR fusion toy detector"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config, "key = value config file");
    sub->add_option("--set", common.overrides, "override a config key (key=value)");
  };

  std::string out, checkpoint, resume, split = "test", modality = "both";
  std::size_t max_steps = 0, scene = 0;
  bool pr_curve = false;

  auto* gen = app.add_subcommand("gen-data", "render the synthetic corpus");
  add_common(gen);
  gen->add_option("-o,--out", out, "corpus directory (corpus.dir)");

  auto* train = app.add_subcommand("train", "train one model");
  add_common(train);
  train->add_option("-o,--out", out, "output directory (out.dir)");
  train->add_option("--resume", resume, "checkpoint to resume from");
  train->add_option("--max-steps", max_steps, "stop after this many steps (0: run to the end)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval);
  eval->add_option("-o,--out", out, "output directory (out.dir)");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--split", split, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}));
  eval->add_flag("--pr-curve", pr_curve, "also write pr_curve.csv");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate the four module variants over seeds");
  add_common(ablate);
  ablate->add_option("-o,--out", out, "output directory (out.dir)");

  auto* filters = app.add_subcommand("filters", "export amplitude / filter / filtered spectra");
  add_common(filters);
  filters->add_option("-o,--out", out, "output directory (out.dir)");
  filters->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  filters->add_option("--scene", scene, "scene index");
  filters->add_option("--modality", modality, "rgb, ir or both")->check(CLI::IsMember({"rgb", "ir", "both"}));

  auto* vis = app.add_subcommand("visualize", "export before/after images and expert overlays");
  add_common(vis);
  vis->add_option("-o,--out", out, "output directory (out.dir)");
  vis->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  vis->add_option("--scene", scene, "scene index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    auto run = load_run(common);
    if (gen->parsed()) {
      if (!out.empty()) run.corpus_dir = out;
      return cmd_gen_data(run);
    }
    if (!out.empty()) run.out_dir = out;
    if (train->parsed()) return cmd_train(run, resume, max_steps);
    if (eval->parsed()) return cmd_eval(run, checkpoint, split, pr_curve);
    if (ablate->parsed()) return cmd_ablate(run);
    if (filters->parsed()) return cmd_filters(run, checkpoint, scene, modality);
    if (vis->parsed()) return cmd_visualize(run, checkpoint, scene);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
