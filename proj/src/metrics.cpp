#include "cffuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace cffuse {

namespace {

// Score-descending order; ties keep input order.
std::vector<std::size_t> by_score(const DetectionSet& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].box.score > dets[b].box.score; });
  return order;
}

// Greedy matching in the given order; true marks a true positive.
std::vector<bool> match(const DetectionSet& dets, const std::vector<std::size_t>& order, const DetectionSet& gts,
                        double iou_thr) {
  std::map<std::size_t, std::vector<std::size_t>> gts_by_image;
  for (std::size_t g = 0; g < gts.size(); ++g) gts_by_image[gts[g].image_id].push_back(g);
  std::vector<bool> used(gts.size(), false);
  std::vector<bool> tp(order.size(), false);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& d = dets[order[k]];
    auto it = gts_by_image.find(d.image_id);
    if (it == gts_by_image.end()) continue;
    double best = -1.0;
    std::size_t best_g = 0;
    for (auto g : it->second) {
      if (used[g] || gts[g].box.class_id != d.box.class_id) continue;
      const double o = iou(d.box, gts[g].box);
      if (o > best) {
        best = o;
        best_g = g;
      }
    }
    if (best >= iou_thr) {
      used[best_g] = true;
      tp[k] = true;
    }
  }
  return tp;
}

DetectionSet of_class(const DetectionSet& set, int class_id) {
  DetectionSet out;
  for (const auto& d : set)
    if (d.box.class_id == class_id) out.push_back(d);
  return out;
}

}  // namespace

double average_precision(const DetectionSet& dets_all, const DetectionSet& gts_all, double iou_thr, int class_id,
                         std::vector<PrPoint>* curve) {
  const DetectionSet dets = of_class(dets_all, class_id);
  const DetectionSet gts = of_class(gts_all, class_id);
  if (curve) curve->clear();
  if (gts.empty()) return 0.0;
  const auto order = by_score(dets);
  const auto tp = match(dets, order, gts, iou_thr);

  const double npos = static_cast<double>(gts.size());
  std::vector<double> rec(order.size()), prec(order.size());
  double ctp = 0.0, cfp = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (tp[k] ? ctp : cfp) += 1.0;
    rec[k] = ctp / npos;
    prec[k] = ctp / (ctp + cfp);
    if (curve) curve->push_back({rec[k], prec[k], dets[order[k]].box.score});
  }
  // Precision envelope with sentinels, summed where recall steps.
  std::vector<double> mrec{0.0}, mpre{0.0};
  mrec.insert(mrec.end(), rec.begin(), rec.end());
  mpre.insert(mpre.end(), prec.begin(), prec.end());
  mrec.push_back(1.0);
  mpre.push_back(0.0);
  for (std::size_t i = mpre.size() - 1; i > 0; --i) mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
  double ap = 0.0;
  for (std::size_t i = 1; i < mrec.size(); ++i) {
    if (mrec[i] != mrec[i - 1]) ap += (mrec[i] - mrec[i - 1]) * mpre[i];
  }
  return ap;
}

double mean_average_precision(const DetectionSet& dets, const DetectionSet& gts, double iou_thr) {
  std::set<int> classes;
  for (const auto& g : gts) classes.insert(g.box.class_id);
  if (classes.empty()) return 0.0;
  double total = 0.0;
  for (int c : classes) total += average_precision(dets, gts, iou_thr, c);
  return total / static_cast<double>(classes.size());
}

std::array<double, 10> coco_iou_thresholds() {
  std::array<double, 10> t{};
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.5 + 0.05 * static_cast<double>(i);
  return t;
}

DetectionMetrics evaluate_detections(const DetectionSet& dets, const DetectionSet& gts, std::size_t num_images) {
  DetectionMetrics m;
  double sum = 0.0;
  for (double t : coco_iou_thresholds()) {
    const double v = mean_average_precision(dets, gts, t);
    sum += v;
    if (std::abs(t - 0.5) < 1e-12) m.map50 = v;
    if (std::abs(t - 0.75) < 1e-12) m.map75 = v;
  }
  m.map = sum / 10.0;
  std::set<int> classes;
  for (const auto& g : gts) classes.insert(g.box.class_id);
  for (int c : classes) m.ap50_per_class[c] = average_precision(dets, gts, 0.5, c);
  m.mr2 = gts.empty() ? 1.0 : log_average_miss_rate(dets, gts, num_images, 0.5);
  return m;
}

std::vector<MissRatePoint> miss_rate_curve(const DetectionSet& dets, const DetectionSet& gts, std::size_t num_images,
                                           double iou_thr) {
  if (gts.empty()) throw NumericError("miss rate is undefined without ground truth");
  if (num_images == 0) throw NumericError("miss rate needs at least one image");
  const auto order = by_score(dets);
  const auto tp = match(dets, order, gts, iou_thr);
  const double ngt = static_cast<double>(gts.size());
  const double nimg = static_cast<double>(num_images);
  std::vector<MissRatePoint> curve{{0.0, 1.0}};
  double ctp = 0.0, cfp = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (tp[k] ? ctp : cfp) += 1.0;
    const bool group_end = k + 1 == order.size() || dets[order[k + 1]].box.score != dets[order[k]].box.score;
    if (group_end) curve.push_back({cfp / nimg, 1.0 - ctp / ngt});
  }
  return curve;
}

std::array<double, 9> fppi_reference_points() {
  std::array<double, 9> ref{};
  for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = std::pow(10.0, -2.0 + 0.25 * static_cast<double>(i));
  return ref;
}

double log_average_miss_rate(const DetectionSet& dets, const DetectionSet& gts, std::size_t num_images,
                             double iou_thr) {
  const auto curve = miss_rate_curve(dets, gts, num_images, iou_thr);
  double log_sum = 0.0;
  const auto refs = fppi_reference_points();
  for (double ref : refs) {
    // Last curve point not exceeding the reference FPPI; fppi is
    // non-decreasing along the curve and the first point has fppi 0.
    double mr = curve.front().miss_rate;
    for (const auto& p : curve) {
      if (p.fppi <= ref) mr = p.miss_rate;
      else break;
    }
    log_sum += std::log(std::max(mr, 1e-10));
  }
  return std::exp(log_sum / static_cast<double>(refs.size()));
}

double snr(const Tensor& image, const Tensor& reference) {
  if (image.dims() != reference.dims()) {
    throw DimensionError("snr: " + shape_str(image.dims()) + " vs " + shape_str(reference.dims()));
  }
  double signal = 0.0, noise = 0.0;
  const auto a = image.data();
  const auto r = reference.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    signal += r[i] * r[i];
    noise += (a[i] - r[i]) * (a[i] - r[i]);
  }
  if (noise == 0.0) return kInfiniteSnr;
  return 10.0 * std::log10(signal / noise);
}

}  // namespace cffuse
