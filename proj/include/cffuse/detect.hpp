#pragma once

#include <string>
#include <vector>

#include "cffuse/box.hpp"
#include "cffuse/layers.hpp"

namespace cffuse {

/// Per-cell training target on an S x S grid over a square image.
///
/// A positive cell stores (dx, dy, log(w / stride), log(h / stride)) where
/// (dx, dy) is the box centre relative to the cell's top-left corner in
/// cell units.
struct GridTarget {
  std::size_t size = 0;
  std::size_t classes = 0;
  double stride = 1.0;
  std::vector<double> objectness;  // [S*S]
  std::vector<double> offsets;     // [4*S*S], zero where objectness = 0
  std::vector<double> class_onehot;  // [classes*S*S]
  std::vector<std::size_t> positives;
};

struct HeadOutput {
  Tensor objectness;  // [1,S,S] logits
  Tensor offsets;     // [4,S,S]
  Tensor classes;     // [n,S,S] logits
};

/// 1x1 convolution mapping the fused feature to per-cell predictions.
class DetectionHead {
 public:
  DetectionHead() = default;
  DetectionHead(ParamStore& store, const std::string& prefix, std::size_t in_channels, std::size_t classes,
                Rng& rng);

  HeadOutput operator()(const Tensor& features) const;
  std::size_t classes() const { return classes_; }

 private:
  std::size_t classes_ = 0;
  Conv2d conv_;
};

/// Marks the cell containing each box centre. When centres collide the
/// larger box wins; equal areas go to the lower class id.
GridTarget assign_targets(const std::vector<Box>& boxes, std::size_t grid, std::size_t image_size,
                          std::size_t classes);

/// Greedy per-class non-maximum suppression. Equal scores keep input order.
std::vector<Box> nms(std::vector<Box> boxes, double iou_threshold);

/// Sigmoid objectness times the best class probability, box
/// reconstruction per cell, thresholding and NMS.
std::vector<Box> decode(const HeadOutput& out, std::size_t image_size, double score_threshold, double nms_iou);

/// Inverts assign_targets for positive cells (used for round-trip checks).
std::vector<Box> decode_targets(const GridTarget& target);

struct DetectionLosses {
  Tensor objectness;  // BCE, positives and negatives balanced
  Tensor regression;  // smooth-L1 on positive offsets
  Tensor classification;  // BCE on positive cells
};

DetectionLosses detection_losses(const HeadOutput& out, const GridTarget& target);

/// CSV with header image_id,class_id,score,x1,y1,x2,y2.
void write_detections_csv(const std::string& path, const DetectionSet& dets);

}  // namespace cffuse
