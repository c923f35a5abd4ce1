#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cffuse/config.hpp"
#include "cffuse/model.hpp"
#include "cffuse/synth.hpp"

namespace cffuse {

struct StepRecord {
  std::size_t step = 0;  // 1-based index of the completed step
  std::size_t epoch = 0;
  double lr = 0.0;
  LossReport report;  // averaged over the minibatch
};

/// Minibatch SGD over a fixed list of scene indices. The sample order of
/// epoch e is a shuffle seeded from (seed, e), so any step can be
/// recomputed from the step counter alone.
class Trainer {
 public:
  Trainer(RsdetModel& model, TrainConfig cfg, std::uint64_t seed, std::vector<std::size_t> indices);

  std::size_t steps_per_epoch() const;
  std::size_t total_steps() const { return steps_per_epoch() * cfg_.epochs; }
  std::size_t completed_steps() const { return step_; }
  bool done() const { return step_ >= total_steps(); }

  /// Warm-up then step decay at the configured epochs.
  double learning_rate(std::size_t step) const;
  std::vector<std::size_t> epoch_order(std::size_t epoch) const;

  /// Runs one step. Throws NumericError on a non-finite loss.
  StepRecord step(const std::vector<Scene>& scenes);
  void run(const std::vector<Scene>& scenes, const std::function<void(const StepRecord&)>& on_step = {});

  /// Parameters, momentum buffers and the step counter.
  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

 private:
  RsdetModel& model_;
  TrainConfig cfg_;
  std::uint64_t seed_;
  std::vector<std::size_t> indices_;
  Sgd sgd_;
  std::size_t step_ = 0;
};

/// Loads only the parameters of a checkpoint into `model`.
void load_model_weights(RsdetModel& model, const std::string& path);

/// CSV writer for per-step loss terms.
class LossLog {
 public:
  explicit LossLog(const std::string& path, bool append = false);
  void write(const StepRecord& record);

 private:
  std::string path_;
};

}  // namespace cffuse
