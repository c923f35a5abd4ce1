#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "cffuse/model.hpp"
#include "cffuse/params.hpp"
#include "cffuse/synth.hpp"

namespace cffuse {

/// Flat `key = value` text configuration. `#` starts a comment; sections
/// are expressed through dotted keys such as `rsr.K`.
class Config {
 public:
  /// Throws ConfigError naming the offending line on malformed input.
  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  /// One `key = value` line per entry, keys sorted.
  std::string serialize() const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& entries() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  bool operator==(const Config& other) const = default;

 private:
  std::map<std::string, std::string> values_;
};

struct TrainConfig {
  std::size_t epochs = 12;
  std::size_t batch = 2;
  SgdConfig sgd;
  double gamma = kDefaultGamma;
  /// Linear warm-up length in steps.
  std::size_t warmup_steps = 50;
  /// Epochs after which the learning rate drops tenfold.
  std::vector<std::size_t> lr_drop_epochs{8, 11};
  /// Global gradient-norm clip; 0 disables clipping.
  double clip_norm = 10.0;
};

struct EvalConfig {
  double score_threshold = 0.05;
  double nms_iou = 0.5;
};

/// Everything one run needs, resolved from a Config.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string corpus_dir = "corpus";
  std::string out_dir = "run";
  CorpusSpec corpus;
  double train_fraction = 0.8;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  std::size_t ablate_seeds = 5;
  std::size_t ablate_threads = 4;

  static RunConfig from(const Config& cfg);
  Config to_config() const;
};

/// Applies CF_FUSE_SEED when set in the environment.
void apply_seed_override(RunConfig& run);

}  // namespace cffuse
