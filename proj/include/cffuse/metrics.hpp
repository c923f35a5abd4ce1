#pragma once

#include <array>
#include <limits>
#include <map>
#include <vector>

#include "cffuse/box.hpp"
#include "cffuse/tensor.hpp"

namespace cffuse {

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double score = 0.0;
};

/// All-points interpolated AP for one class. Detections are visited in
/// descending score (stable for ties); each matches the unmatched
/// same-image ground truth of highest IoU, provided IoU >= iou_thr.
/// Returns 0 when the class has no ground truth.
double average_precision(const DetectionSet& dets, const DetectionSet& gts, double iou_thr, int class_id,
                         std::vector<PrPoint>* curve = nullptr);

/// Mean of per-class AP over the classes that have ground truth.
double mean_average_precision(const DetectionSet& dets, const DetectionSet& gts, double iou_thr);

/// IoU thresholds 0.50, 0.55, ..., 0.95.
std::array<double, 10> coco_iou_thresholds();

struct DetectionMetrics {
  double map50 = 0.0;
  double map75 = 0.0;
  double map = 0.0;  // mean over the ten IoU thresholds
  double mr2 = 1.0;  // log-average miss rate at IoU 0.5
  std::map<int, double> ap50_per_class;
};

DetectionMetrics evaluate_detections(const DetectionSet& dets, const DetectionSet& gts, std::size_t num_images);

struct MissRatePoint {
  double fppi = 0.0;
  double miss_rate = 1.0;
};

/// Miss rate versus false positives per image, one point per distinct
/// score threshold, starting from (0, 1) with nothing accepted.
std::vector<MissRatePoint> miss_rate_curve(const DetectionSet& dets, const DetectionSet& gts,
                                           std::size_t num_images, double iou_thr);

/// The nine reference FPPI values, log-uniform on [1e-2, 1].
std::array<double, 9> fppi_reference_points();

/// Geometric mean of the miss rate at the nine reference FPPI values (each
/// clamped below at 1e-10). Throws NumericError with no ground truth.
double log_average_miss_rate(const DetectionSet& dets, const DetectionSet& gts, std::size_t num_images,
                             double iou_thr = 0.5);

/// 10 log10(sum ref^2 / sum (image - ref)^2) in dB; +infinity when the
/// residual is exactly zero.
double snr(const Tensor& image, const Tensor& reference);

inline constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();

}  // namespace cffuse
