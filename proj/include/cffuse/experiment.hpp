#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "cffuse/config.hpp"
#include "cffuse/metrics.hpp"
#include "cffuse/model.hpp"
#include "cffuse/synth.hpp"

namespace cffuse {

/// Ground-truth boxes of the selected scenes; image_id is the scene index.
DetectionSet ground_truth(const std::vector<Scene>& scenes, const std::vector<std::size_t>& indices);

struct EvalResult {
  DetectionSet detections;
  DetectionSet ground_truth;
  DetectionMetrics metrics;
};

EvalResult evaluate_model(const RsdetModel& model, const std::vector<Scene>& scenes,
                          const std::vector<std::size_t>& indices, const EvalConfig& cfg);

/// Two columns, metric,value: mAP50, mAP75, mAP, MR-2, then AP50_class<k>.
void write_metrics_csv(const std::string& path, const DetectionMetrics& m);
/// class_id,recall,precision,score at IoU 0.5.
void write_pr_curve_csv(const std::string& path, const EvalResult& result, std::size_t classes);

enum class Variant { Baseline, Rsr, Dfs, Both };

std::string to_string(Variant v);
inline constexpr std::array<Variant, 4> kAllVariants{Variant::Baseline, Variant::Rsr, Variant::Dfs, Variant::Both};
ModelConfig variant_config(ModelConfig base, Variant v);

/// SNR before and after RSR against the clean references.
struct SnrAudit {
  std::size_t count = 0;
  double input_i = 0.0, cleaned_i = 0.0;
  double input_v = 0.0, cleaned_v = 0.0;

  double gain_i() const { return cleaned_i - input_i; }
  double gain_v() const { return cleaned_v - input_v; }
  double gain() const { return 0.5 * (gain_i() + gain_v()); }
};

/// Means over the selected scenes. Scenes without noise (infinite input
/// SNR) are skipped. Requires a model with RSR enabled.
SnrAudit snr_audit(const RsdetModel& model, const std::vector<Scene>& scenes, const std::vector<std::size_t>& indices);

struct AblationCell {
  Variant variant = Variant::Baseline;
  std::uint64_t seed = 0;
  DetectionMetrics metrics;
  /// Filled for variants with RSR.
  SnrAudit snr;
};

struct AblationRow {
  Variant variant = Variant::Baseline;
  double map50_mean = 0.0, map50_std = 0.0;
  double map_mean = 0.0, map_std = 0.0;
  double mr2_mean = 0.0, mr2_std = 0.0;
};

struct AblationResult {
  std::vector<AblationCell> cells;  // variant-major, then seed
  std::vector<AblationRow> rows;    // one per variant
  const AblationRow& row(Variant v) const;
};

/// Seeds run.seed, run.seed + 1, ... Each cell trains on the train split
/// and evaluates on the test split. Cells run on `run.ablate_threads`
/// workers; results do not depend on the thread count.
AblationResult run_ablation(const RunConfig& run, const std::vector<Scene>& scenes,
                            const std::function<void(const AblationCell&)>& on_cell = {});

/// Summary over seeds (population std).
std::vector<AblationRow> summarize(const std::vector<AblationCell>& cells);

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);
void write_ablation_cells_csv(const std::string& path, const std::vector<AblationCell>& cells);

/// Trains one model on the train split of `scenes`.
RsdetModel train_model(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const std::vector<Scene>& scenes,
                       const std::vector<std::size_t>& train_indices);

/// Writes <mod>_amplitude.pgm, <mod>_filter.pgm and <mod>_filtered.pgm
/// (log amplitude, filter, filtered log amplitude; all centre-shifted) for
/// one modality ("rgb" or "ir"). Returns the written paths.
std::vector<std::string> export_filters(const RsdetModel& model, const Scene& scene, const std::string& modality,
                                        const std::string& dir);

/// Before/after images of both modalities with an snr.csv annotation, and
/// one heat overlay per expert and scale. Returns the written paths.
std::vector<std::string> export_visuals(const RsdetModel& model, const Scene& scene, const std::string& dir);

}  // namespace cffuse
