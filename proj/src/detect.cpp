#include "cffuse/detect.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "cffuse/ops.hpp"

namespace cffuse {

namespace {

double sigmoid1(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

DetectionHead::DetectionHead(ParamStore& store, const std::string& prefix, std::size_t in_channels,
                             std::size_t classes, Rng& rng)
    : classes_(classes), conv_(store, prefix + ".conv", in_channels, 1 + 4 + classes, 1, rng) {}

HeadOutput DetectionHead::operator()(const Tensor& features) const {
  const Tensor raw = conv_(features);
  return {slice(raw, 0, 1), slice(raw, 1, 4), slice(raw, 5, classes_)};
}

GridTarget assign_targets(const std::vector<Box>& boxes, std::size_t grid, std::size_t image_size,
                          std::size_t classes) {
  if (grid == 0 || image_size % grid != 0) {
    throw DimensionError("assign_targets: grid " + std::to_string(grid) + " does not divide image size " +
                         std::to_string(image_size));
  }
  GridTarget t;
  t.size = grid;
  t.classes = classes;
  t.stride = static_cast<double>(image_size / grid);
  const std::size_t cells = grid * grid;
  t.objectness.assign(cells, 0.0);
  t.offsets.assign(4 * cells, 0.0);
  t.class_onehot.assign(classes * cells, 0.0);

  std::vector<int> owner(cells, -1);
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const auto& box = boxes[b];
    if (!(box.x2 > box.x1 && box.y2 > box.y1)) throw DimensionError("assign_targets: degenerate box");
    if (box.class_id < 0 || static_cast<std::size_t>(box.class_id) >= classes) {
      throw DimensionError("assign_targets: class id " + std::to_string(box.class_id) + " out of range");
    }
    const auto col = std::min(grid - 1, static_cast<std::size_t>(std::max(0.0, box.cx() / t.stride)));
    const auto row = std::min(grid - 1, static_cast<std::size_t>(std::max(0.0, box.cy() / t.stride)));
    const std::size_t cell = row * grid + col;
    if (owner[cell] >= 0) {
      const auto& prev = boxes[static_cast<std::size_t>(owner[cell])];
      const bool larger = box.area() > prev.area();
      const bool tie_wins = box.area() == prev.area() && box.class_id < prev.class_id;
      if (!larger && !tie_wins) continue;
    }
    owner[cell] = static_cast<int>(b);
  }
  for (std::size_t cell = 0; cell < cells; ++cell) {
    if (owner[cell] < 0) continue;
    const auto& box = boxes[static_cast<std::size_t>(owner[cell])];
    const double row = static_cast<double>(cell / grid), col = static_cast<double>(cell % grid);
    t.objectness[cell] = 1.0;
    t.offsets[0 * cells + cell] = box.cx() / t.stride - col;
    t.offsets[1 * cells + cell] = box.cy() / t.stride - row;
    t.offsets[2 * cells + cell] = std::log(box.width() / t.stride);
    t.offsets[3 * cells + cell] = std::log(box.height() / t.stride);
    t.class_onehot[static_cast<std::size_t>(box.class_id) * cells + cell] = 1.0;
    t.positives.push_back(cell);
  }
  return t;
}

std::vector<Box> nms(std::vector<Box> boxes, double iou_threshold) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });
  std::vector<Box> kept;
  for (auto i : order) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (k.class_id == boxes[i].class_id && iou(k, boxes[i]) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(boxes[i]);
  }
  return kept;
}

namespace {

Box cell_box(std::size_t cell, std::size_t grid, double stride, double dx, double dy, double tw, double th) {
  const double row = static_cast<double>(cell / grid), col = static_cast<double>(cell % grid);
  const double cx = (col + dx) * stride, cy = (row + dy) * stride;
  const double w = stride * std::exp(std::clamp(tw, -4.0, 4.0));
  const double h = stride * std::exp(std::clamp(th, -4.0, 4.0));
  Box b;
  b.x1 = cx - 0.5 * w;
  b.x2 = cx + 0.5 * w;
  b.y1 = cy - 0.5 * h;
  b.y2 = cy + 0.5 * h;
  return b;
}

}  // namespace

std::vector<Box> decode(const HeadOutput& out, std::size_t image_size, double score_threshold, double nms_iou) {
  const std::size_t grid = out.objectness.dim(1);
  const std::size_t cells = grid * grid;
  const std::size_t classes = out.classes.dim(0);
  const double stride = static_cast<double>(image_size) / static_cast<double>(grid);
  const auto obj = out.objectness.data();
  const auto off = out.offsets.data();
  const auto cls = out.classes.data();
  const double limit = static_cast<double>(image_size);
  std::vector<Box> found;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (cls[c * cells + cell] > cls[best * cells + cell]) best = c;
    const double score = sigmoid1(obj[cell]) * sigmoid1(cls[best * cells + cell]);
    if (!(score >= score_threshold) || score <= 0.0) continue;
    Box b = cell_box(cell, grid, stride, off[cell], off[cells + cell], off[2 * cells + cell], off[3 * cells + cell]);
    b.x1 = std::clamp(b.x1, 0.0, limit);
    b.x2 = std::clamp(b.x2, 0.0, limit);
    b.y1 = std::clamp(b.y1, 0.0, limit);
    b.y2 = std::clamp(b.y2, 0.0, limit);
    if (!(b.x2 > b.x1 && b.y2 > b.y1)) continue;
    b.score = score;
    b.class_id = static_cast<int>(best);
    found.push_back(b);
  }
  return nms(std::move(found), nms_iou);
}

std::vector<Box> decode_targets(const GridTarget& target) {
  const std::size_t cells = target.size * target.size;
  std::vector<Box> out;
  for (auto cell : target.positives) {
    Box b = cell_box(cell, target.size, target.stride, target.offsets[cell], target.offsets[cells + cell],
                     target.offsets[2 * cells + cell], target.offsets[3 * cells + cell]);
    for (std::size_t c = 0; c < target.classes; ++c)
      if (target.class_onehot[c * cells + cell] > 0.5) b.class_id = static_cast<int>(c);
    out.push_back(b);
  }
  return out;
}

DetectionLosses detection_losses(const HeadOutput& out, const GridTarget& target) {
  const std::size_t cells = target.size * target.size;
  if (out.objectness.numel() != cells || out.classes.dim(0) != target.classes) {
    throw DimensionError("detection_losses: head output " + shape_str(out.objectness.dims()) +
                         " does not match target grid");
  }
  const double npos = static_cast<double>(target.positives.size());
  const double pos_norm = 1.0 / std::max(1.0, npos);
  const double neg_norm = 1.0 / static_cast<double>(cells);

  // BCE with logits: softplus(z) - t * z
  std::vector<double> obj_weight(cells);
  for (std::size_t i = 0; i < cells; ++i) obj_weight[i] = target.objectness[i] > 0.5 ? pos_norm : neg_norm;
  const Tensor obj_t(out.objectness.dims(), target.objectness);
  const Tensor obj_bce = sub(softplus(out.objectness), mul(out.objectness, obj_t));
  const Tensor l_obj = sum(mul(obj_bce, Tensor(out.objectness.dims(), obj_weight)));

  std::vector<double> reg_mask(4 * cells, 0.0);
  std::vector<double> cls_mask(target.classes * cells, 0.0);
  for (auto cell : target.positives) {
    for (std::size_t k = 0; k < 4; ++k) reg_mask[k * cells + cell] = pos_norm;
    for (std::size_t c = 0; c < target.classes; ++c) cls_mask[c * cells + cell] = pos_norm;
  }
  const Tensor off_t(out.offsets.dims(), target.offsets);
  const Tensor l_reg = sum(mul(smooth_l1(sub(out.offsets, off_t)), Tensor(out.offsets.dims(), reg_mask)));

  const Tensor cls_t(out.classes.dims(), target.class_onehot);
  const Tensor cls_bce = sub(softplus(out.classes), mul(out.classes, cls_t));
  const Tensor l_cls = sum(mul(cls_bce, Tensor(out.classes.dims(), cls_mask)));
  return {l_obj, l_reg, l_cls};
}

void write_detections_csv(const std::string& path, const DetectionSet& dets) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os << "image_id,class_id,score,x1,y1,x2,y2\n";
  os.precision(17);
  for (const auto& d : dets) {
    os << d.image_id << ',' << d.box.class_id << ',' << d.box.score << ',' << d.box.x1 << ',' << d.box.y1 << ','
       << d.box.x2 << ',' << d.box.y2 << '\n';
  }
}

}  // namespace cffuse
