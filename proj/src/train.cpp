#include "cffuse/train.hpp"

#include <cmath>
#include <fstream>

#include "cffuse/errors.hpp"
#include "cffuse/ops.hpp"
#include "cffuse/tensor_io.hpp"

namespace cffuse {

namespace {

constexpr const char* kParamPrefix = "param/";
constexpr const char* kOptPrefix = "opt/";
constexpr const char* kStepKey = "meta/step";

void clip_gradients(ParamStore& store, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& p : store.params()) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (auto& p : store.params()) {
    if (!p.tensor.has_grad()) continue;
    for (double& g : p.tensor.mutable_grad()) g *= s;
  }
}

}  // namespace

Trainer::Trainer(RsdetModel& model, TrainConfig cfg, std::uint64_t seed, std::vector<std::size_t> indices)
    : model_(model), cfg_(std::move(cfg)), seed_(seed), indices_(std::move(indices)), sgd_(cfg_.sgd) {
  if (indices_.empty()) throw ConfigError("training needs at least one scene");
  if (cfg_.batch == 0) throw ConfigError("batch size must be positive");
}

std::size_t Trainer::steps_per_epoch() const { return (indices_.size() + cfg_.batch - 1) / cfg_.batch; }

double Trainer::learning_rate(std::size_t step) const {
  double lr = cfg_.sgd.lr;
  if (cfg_.warmup_steps > 0 && step < cfg_.warmup_steps) {
    lr *= static_cast<double>(step + 1) / static_cast<double>(cfg_.warmup_steps);
  }
  const std::size_t epoch = step / steps_per_epoch();
  for (std::size_t drop : cfg_.lr_drop_epochs) {
    if (epoch >= drop) lr *= 0.1;
  }
  return lr;
}

std::vector<std::size_t> Trainer::epoch_order(std::size_t epoch) const {
  std::vector<std::size_t> order = indices_;
  Rng rng(derive_seed(seed_, 0x5eed0000ULL + epoch));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  return order;
}

StepRecord Trainer::step(const std::vector<Scene>& scenes) {
  const std::size_t per_epoch = steps_per_epoch();
  const std::size_t epoch = step_ / per_epoch;
  const std::size_t pos = step_ % per_epoch;
  const auto order = epoch_order(epoch);
  const std::size_t begin = pos * cfg_.batch;
  const std::size_t end = std::min(order.size(), begin + cfg_.batch);
  const double inv = 1.0 / static_cast<double>(end - begin);

  auto& store = model_.params();
  store.zero_grad();
  StepRecord rec;
  rec.step = step_ + 1;
  rec.epoch = epoch;
  rec.report.gamma = cfg_.gamma;
  for (std::size_t j = begin; j < end; ++j) {
    const auto idx = order[j];
    if (idx >= scenes.size()) throw DimensionError("scene index " + std::to_string(idx) + " out of range");
    const Scene& s = scenes[idx];
    const auto fwd = model_.forward(s.image_v, s.image_i);
    auto loss = model_.loss(fwd, s.boxes, cfg_.gamma);
    if (!std::isfinite(loss.report.total)) {
      throw NumericError("non-finite loss at step " + std::to_string(rec.step) + " (scene " + std::to_string(idx) + ")");
    }
    scale(loss.total, inv).backward();
    rec.report.l_i_spe += inv * loss.report.l_i_spe;
    rec.report.l_v_spe += inv * loss.report.l_v_spe;
    rec.report.l_det_cls += inv * loss.report.l_det_cls;
    rec.report.l_det_reg += inv * loss.report.l_det_reg;
    rec.report.l_det_obj += inv * loss.report.l_det_obj;
    rec.report.total += inv * loss.report.total;
  }
  clip_gradients(store, cfg_.clip_norm);
  rec.lr = learning_rate(step_);
  sgd_.config().lr = rec.lr;
  sgd_.step(store);
  ++step_;
  return rec;
}

void Trainer::run(const std::vector<Scene>& scenes, const std::function<void(const StepRecord&)>& on_step) {
  while (!done()) {
    const auto rec = step(scenes);
    if (on_step) on_step(rec);
  }
}

void Trainer::save_checkpoint(const std::string& path) const {
  std::map<std::string, Tensor> bundle;
  for (const auto& p : model_.params().params()) {
    bundle[kParamPrefix + p.name] = p.tensor.detach().clone();
    auto it = sgd_.velocity().find(p.name);
    if (it != sgd_.velocity().end()) bundle[kOptPrefix + p.name] = Tensor(p.tensor.dims(), it->second);
  }
  bundle[kStepKey] = Tensor::scalar(static_cast<double>(step_));
  save_bundle(path, bundle);
}

void Trainer::load_checkpoint(const std::string& path) {
  auto bundle = load_bundle(path);
  std::map<std::string, Tensor> params;
  std::map<std::string, std::vector<double>> velocity;
  for (const auto& [name, t] : bundle) {
    if (name.rfind(kParamPrefix, 0) == 0) {
      params[name.substr(std::char_traits<char>::length(kParamPrefix))] = t;
    } else if (name.rfind(kOptPrefix, 0) == 0) {
      velocity[name.substr(std::char_traits<char>::length(kOptPrefix))] = std::vector<double>(t.data().begin(), t.data().end());
    }
  }
  auto it = bundle.find(kStepKey);
  if (it == bundle.end()) throw FormatError(path + ": checkpoint has no step counter");
  model_.params().load(params);
  sgd_.set_velocity(std::move(velocity));
  step_ = static_cast<std::size_t>(it->second.item());
}

void load_model_weights(RsdetModel& model, const std::string& path) {
  std::map<std::string, Tensor> params;
  for (const auto& [name, t] : load_bundle(path)) {
    if (name.rfind(kParamPrefix, 0) == 0) params[name.substr(std::char_traits<char>::length(kParamPrefix))] = t;
  }
  model.params().load(params);
}

LossLog::LossLog(const std::string& path, bool append) : path_(path) {
  if (append) {
    std::ifstream probe(path);
    if (probe) return;
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot write " + path);
  os << "step,l_i_spe,l_v_spe,l_det_cls,l_det_reg,l_det_obj,total\n";
}

void LossLog::write(const StepRecord& r) {
  std::ofstream os(path_, std::ios::app);
  if (!os) throw FormatError("cannot write " + path_);
  os.precision(17);
  os << r.step << ',' << r.report.l_i_spe << ',' << r.report.l_v_spe << ',' << r.report.l_det_cls << ','
     << r.report.l_det_reg << ',' << r.report.l_det_obj << ',' << r.report.total << '\n';
}

}  // namespace cffuse
