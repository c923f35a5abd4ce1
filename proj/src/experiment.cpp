#include "cffuse/experiment.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "cffuse/errors.hpp"
#include "cffuse/ops.hpp"
#include "cffuse/pnm.hpp"
#include "cffuse/spectral.hpp"
#include "cffuse/train.hpp"

namespace fs = std::filesystem;

namespace cffuse {

DetectionSet ground_truth(const std::vector<Scene>& scenes, const std::vector<std::size_t>& indices) {
  DetectionSet gts;
  for (auto idx : indices) {
    for (const auto& b : scenes.at(idx).boxes) gts.push_back({idx, b});
  }
  return gts;
}

EvalResult evaluate_model(const RsdetModel& model, const std::vector<Scene>& scenes,
                          const std::vector<std::size_t>& indices, const EvalConfig& cfg) {
  EvalResult r;
  for (auto idx : indices) {
    const auto& s = scenes.at(idx);
    for (const auto& b : model.detect(s.image_v, s.image_i, cfg.score_threshold, cfg.nms_iou)) {
      r.detections.push_back({idx, b});
    }
  }
  r.ground_truth = ground_truth(scenes, indices);
  r.metrics = evaluate_detections(r.detections, r.ground_truth, indices.size());
  return r;
}

void write_metrics_csv(const std::string& path, const DetectionMetrics& m) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path);
  os.precision(17);
  os << "metric,value\n";
  os << "mAP50," << m.map50 << "\nmAP75," << m.map75 << "\nmAP," << m.map << "\nMR-2," << m.mr2 << '\n';
  for (const auto& [cls, ap] : m.ap50_per_class) os << "AP50_class" << cls << ',' << ap << '\n';
}

void write_pr_curve_csv(const std::string& path, const EvalResult& result, std::size_t classes) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path);
  os.precision(17);
  os << "class_id,recall,precision,score\n";
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<PrPoint> curve;
    average_precision(result.detections, result.ground_truth, 0.5, static_cast<int>(c), &curve);
    for (const auto& p : curve) os << c << ',' << p.recall << ',' << p.precision << ',' << p.score << '\n';
  }
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::Rsr: return "rsr";
    case Variant::Dfs: return "dfs";
    case Variant::Both: return "both";
  }
  return "?";
}

ModelConfig variant_config(ModelConfig base, Variant v) {
  base.use_rsr = v == Variant::Rsr || v == Variant::Both;
  base.use_dfs = v == Variant::Dfs || v == Variant::Both;
  return base;
}

SnrAudit snr_audit(const RsdetModel& model, const std::vector<Scene>& scenes, const std::vector<std::size_t>& indices) {
  if (!model.config().use_rsr) throw ConfigError("SNR audit needs a model with RSR");
  NoGradGuard no_grad;
  SnrAudit a;
  for (auto idx : indices) {
    const auto& s = scenes.at(idx);
    const double in_i = snr(s.image_i, s.clean_i);
    const double in_v = snr(s.image_v, s.clean_v);
    if (std::isinf(in_i) || std::isinf(in_v)) continue;
    const auto fwd = model.forward(s.image_v, s.image_i);
    a.input_i += in_i;
    a.input_v += in_v;
    a.cleaned_i += snr(fwd.cleaned_i, s.clean_i);
    a.cleaned_v += snr(fwd.cleaned_v, s.clean_v);
    ++a.count;
  }
  if (a.count > 0) {
    const double n = static_cast<double>(a.count);
    a.input_i /= n;
    a.input_v /= n;
    a.cleaned_i /= n;
    a.cleaned_v /= n;
  }
  return a;
}

RsdetModel train_model(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const std::vector<Scene>& scenes,
                       const std::vector<std::size_t>& train_indices) {
  RsdetModel model(model_cfg);
  Trainer trainer(model, train_cfg, model_cfg.seed, train_indices);
  trainer.run(scenes);
  return model;
}

const AblationRow& AblationResult::row(Variant v) const {
  for (const auto& r : rows) {
    if (r.variant == v) return r;
  }
  throw std::out_of_range("no ablation row for " + to_string(v));
}

AblationResult run_ablation(const RunConfig& run, const std::vector<Scene>& scenes,
                            const std::function<void(const AblationCell&)>& on_cell) {
  if (run.ablate_seeds == 0) throw ConfigError("ablate.seeds must be positive");
  const auto split = split_by_index(scenes.size(), run.train_fraction);
  AblationResult result;
  for (auto v : kAllVariants) {
    for (std::size_t j = 0; j < run.ablate_seeds; ++j) result.cells.push_back({v, run.seed + j, {}, {}});
  }

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= result.cells.size()) return;
      try {
        auto& cell = result.cells[i];
        auto cfg = variant_config(run.model, cell.variant);
        cfg.seed = cell.seed;
        const auto model = train_model(cfg, run.train, scenes, split.train);
        cell.metrics = evaluate_model(model, scenes, split.test, run.eval).metrics;
        if (cfg.use_rsr) cell.snr = snr_audit(model, scenes, split.test);
        std::lock_guard<std::mutex> lock(mu);
        if (on_cell) on_cell(cell);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
        next = result.cells.size();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(run.ablate_threads, result.cells.size()));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  result.rows = summarize(result.cells);
  return result;
}

std::vector<AblationRow> summarize(const std::vector<AblationCell>& cells) {
  std::vector<AblationRow> rows;
  for (auto v : kAllVariants) {
    std::vector<const AblationCell*> sel;
    for (const auto& c : cells) {
      if (c.variant == v) sel.push_back(&c);
    }
    if (sel.empty()) continue;
    auto stats = [&](auto get, double& mean, double& sd) {
      mean = 0.0;
      for (auto* c : sel) mean += get(*c);
      mean /= static_cast<double>(sel.size());
      double var = 0.0;
      for (auto* c : sel) var += (get(*c) - mean) * (get(*c) - mean);
      sd = std::sqrt(var / static_cast<double>(sel.size()));
    };
    AblationRow r;
    r.variant = v;
    stats([](const AblationCell& c) { return c.metrics.map50; }, r.map50_mean, r.map50_std);
    stats([](const AblationCell& c) { return c.metrics.map; }, r.map_mean, r.map_std);
    stats([](const AblationCell& c) { return c.metrics.mr2; }, r.mr2_mean, r.mr2_std);
    rows.push_back(r);
  }
  return rows;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path);
  os.precision(17);
  os << "variant,mAP50_mean,mAP50_std,mAP_mean,mAP_std,MR-2_mean,MR-2_std\n";
  for (const auto& r : rows) {
    os << to_string(r.variant) << ',' << r.map50_mean << ',' << r.map50_std << ',' << r.map_mean << ',' << r.map_std
       << ',' << r.mr2_mean << ',' << r.mr2_std << '\n';
  }
}

void write_ablation_cells_csv(const std::string& path, const std::vector<AblationCell>& cells) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path);
  os.precision(17);
  os << "variant,seed,mAP50,mAP75,mAP,MR-2,snr_gain_ir,snr_gain_rgb\n";
  for (const auto& c : cells) {
    os << to_string(c.variant) << ',' << c.seed << ',' << c.metrics.map50 << ',' << c.metrics.map75 << ','
       << c.metrics.map << ',' << c.metrics.mr2 << ',';
    if (c.snr.count > 0) os << c.snr.gain_i() << ',' << c.snr.gain_v() << '\n';
    else os << ",\n";
  }
}

namespace {

void write_plane(const std::string& path, const Tensor& plane) {
  const std::size_t h = plane.dim(plane.rank() - 2), w = plane.dim(plane.rank() - 1);
  write_pnm(path, to_image8(reshape(normalize_for_display(reshape(plane, {h, w})), {1, h, w})));
}

/// Grey image with a red heat map blended in.
Image8 heat_overlay(const Tensor& gray, const Tensor& heat) {
  const std::size_t h = gray.dim(1), w = gray.dim(2);
  std::vector<double> rgb(3 * h * w);
  for (std::size_t p = 0; p < h * w; ++p) {
    const double g = gray[p], q = heat[p];
    rgb[p] = 0.5 * g + 0.5 * q;
    rgb[h * w + p] = 0.5 * g;
    rgb[2 * h * w + p] = 0.5 * g * (1.0 - q);
  }
  return to_image8(Tensor({3, h, w}, std::move(rgb)));
}

}  // namespace

std::vector<std::string> export_filters(const RsdetModel& model, const Scene& scene, const std::string& modality,
                                        const std::string& dir) {
  if (!model.config().use_rsr) throw ConfigError("filter export needs a model with RSR");
  if (modality != "rgb" && modality != "ir") throw ConfigError("modality must be rgb or ir, got '" + modality + "'");
  NoGradGuard no_grad;
  fs::create_directories(dir);
  const auto fwd = model.forward(scene.image_v, scene.image_i);
  const bool ir = modality == "ir";
  const Tensor& input = ir ? scene.image_i : scene.image_v;
  const Tensor& cleaned = ir ? fwd.cleaned_i : fwd.cleaned_v;
  const SpectralFilter& filter = fwd.filters.at(ir ? 1 : 0);

  const std::vector<std::string> paths{(fs::path(dir) / (modality + "_amplitude.pgm")).string(),
                                       (fs::path(dir) / (modality + "_filter.pgm")).string(),
                                       (fs::path(dir) / (modality + "_filtered.pgm")).string()};
  write_plane(paths[0], shifted_log_amplitude(dft2(input)));
  // The filter already lies in [0,1]; write it without stretching.
  const auto shifted = fftshift(filter.values);
  write_pnm(paths[1], to_image8(reshape(shifted, {1, shifted.dim(0), shifted.dim(1)})));
  write_plane(paths[2], shifted_log_amplitude(dft2(cleaned)));
  return paths;
}

std::vector<std::string> export_visuals(const RsdetModel& model, const Scene& scene, const std::string& dir) {
  NoGradGuard no_grad;
  fs::create_directories(dir);
  const auto fwd = model.forward(scene.image_v, scene.image_i);
  std::vector<std::string> paths;
  auto out = [&](const std::string& name) {
    paths.push_back((fs::path(dir) / name).string());
    return paths.back();
  };
  write_pnm(out("rgb_before.ppm"), to_image8(scene.image_v));
  write_pnm(out("rgb_after.ppm"), to_image8(fwd.cleaned_v));
  write_pnm(out("ir_before.pgm"), to_image8(scene.image_i));
  write_pnm(out("ir_after.pgm"), to_image8(fwd.cleaned_i));
  {
    std::ofstream os(out("snr.csv"));
    if (!os) throw FormatError("cannot write " + paths.back());
    os.precision(17);
    os << "modality,snr_before_db,snr_after_db\n";
    os << "rgb," << snr(scene.image_v, scene.clean_v) << ',' << snr(fwd.cleaned_v, scene.clean_v) << '\n';
    os << "ir," << snr(scene.image_i, scene.clean_i) << ',' << snr(fwd.cleaned_i, scene.clean_i) << '\n';
  }
  const std::size_t h = scene.image_i.dim(1), w = scene.image_i.dim(2);
  const Tensor gray_v = channel_mean(scene.image_v);
  for (std::size_t s = 0; s < fwd.dfs.experts_i.size(); ++s) {
    for (int m = 0; m < 2; ++m) {
      const Tensor& feat = m == 0 ? fwd.dfs.experts_i[s] : fwd.dfs.experts_v[s];
      const Tensor heat = normalize_for_display(reshape(resize_nearest(channel_mean(feat), h, w), {h, w}));
      const std::string name = std::string("expert_") + (m == 0 ? "ir" : "rgb") + "_scale" + std::to_string(s) + ".ppm";
      write_pnm(out(name), heat_overlay(m == 0 ? scene.image_i : gray_v, heat));
    }
  }
  return paths;
}

}  // namespace cffuse
