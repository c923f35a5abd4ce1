#include "cffuse/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace cffuse {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  if (trim(text).empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::size_t>(key, trim(item)));
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (cfg.values_.count(key)) {
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return parse(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<double>(key, it->second);
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<std::int64_t>(key, it->second);
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<std::uint64_t>(key, it->second);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + it->second + "'");
}

RunConfig RunConfig::from(const Config& c) {
  static const std::vector<std::string> known{
      "seed", "corpus.dir", "corpus.seed", "corpus.count", "corpus.size", "corpus.min_objects",
      "corpus.max_objects", "corpus.night_fraction", "corpus.noise", "corpus.noise_structured",
      "corpus.noise_sensor", "corpus.train_fraction", "out.dir", "model.classes", "rsr.enabled", "rsr.K",
      "rsr.mode", "rsr.grid", "rsr.encoder", "backbone.stem", "backbone.widths", "backbone.shared_channels",
      "dfs.enabled", "dfs.t", "dfs.expert_channels", "train.epochs", "train.batch", "train.lr", "train.momentum",
      "train.weight_decay", "train.gamma", "train.warmup_steps", "train.lr_drop_epochs", "train.clip_norm",
      "eval.score_threshold", "eval.nms_iou", "ablate.seeds", "ablate.threads"};
  for (const auto& [k, v] : c.entries()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown config key '" + k + "'");
  }
  RunConfig r;
  r.seed = c.get_u64("seed", r.seed);
  r.corpus_dir = c.get_string("corpus.dir", r.corpus_dir);
  r.out_dir = c.get_string("out.dir", r.out_dir);
  r.corpus.seed = c.get_u64("corpus.seed", r.corpus.seed);
  r.corpus.count = static_cast<std::size_t>(c.get_int("corpus.count", static_cast<std::int64_t>(r.corpus.count)));
  r.corpus.size = static_cast<std::size_t>(c.get_int("corpus.size", static_cast<std::int64_t>(r.corpus.size)));
  r.corpus.min_objects =
      static_cast<std::size_t>(c.get_int("corpus.min_objects", static_cast<std::int64_t>(r.corpus.min_objects)));
  r.corpus.max_objects =
      static_cast<std::size_t>(c.get_int("corpus.max_objects", static_cast<std::int64_t>(r.corpus.max_objects)));
  r.corpus.night_fraction = c.get_double("corpus.night_fraction", r.corpus.night_fraction);
  r.corpus.noise.kind = parse_noise_kind(c.get_string("corpus.noise", to_string(r.corpus.noise.kind)));
  r.corpus.noise.structured = c.get_double("corpus.noise_structured", r.corpus.noise.structured);
  r.corpus.noise.sensor = c.get_double("corpus.noise_sensor", r.corpus.noise.sensor);
  r.train_fraction = c.get_double("corpus.train_fraction", r.train_fraction);

  auto& m = r.model;
  m.seed = r.seed;
  m.image_size = r.corpus.size;
  m.classes = static_cast<std::size_t>(c.get_int("model.classes", static_cast<std::int64_t>(m.classes)));
  m.use_rsr = c.get_bool("rsr.enabled", m.use_rsr);
  m.use_dfs = c.get_bool("dfs.enabled", m.use_dfs);
  m.rsr.k = static_cast<std::size_t>(c.get_int("rsr.K", static_cast<std::int64_t>(m.rsr.k)));
  m.rsr.mode = parse_filter_mode(c.get_string("rsr.mode", to_string(m.rsr.mode)));
  const auto grid = static_cast<std::size_t>(c.get_int("rsr.grid", static_cast<std::int64_t>(m.rsr.grid_rows)));
  m.rsr.grid_rows = m.rsr.grid_cols = grid;
  const auto enc = c.get_string("rsr.encoder", "dense");
  if (enc == "dense") m.rsr.encoder = EncoderKind::Dense;
  else if (enc == "patchwise") m.rsr.encoder = EncoderKind::Patchwise;
  else throw ConfigError("rsr.encoder must be dense or patchwise, got '" + enc + "'");
  m.backbone.stem_channels =
      static_cast<std::size_t>(c.get_int("backbone.stem", static_cast<std::int64_t>(m.backbone.stem_channels)));
  if (c.has("backbone.widths")) m.backbone.scale_channels = parse_list("backbone.widths", c.get_string("backbone.widths", ""));
  m.dfs.threshold = c.get_double("dfs.t", m.dfs.threshold);
  m.dfs.expert_channels =
      static_cast<std::size_t>(c.get_int("dfs.expert_channels", static_cast<std::int64_t>(m.dfs.expert_channels)));
  m.backbone.shared_channels = static_cast<std::size_t>(c.get_int(
      "backbone.shared_channels", static_cast<std::int64_t>(m.backbone.scales() * m.dfs.expert_channels)));

  auto& t = r.train;
  t.epochs = static_cast<std::size_t>(c.get_int("train.epochs", static_cast<std::int64_t>(t.epochs)));
  t.batch = static_cast<std::size_t>(c.get_int("train.batch", static_cast<std::int64_t>(t.batch)));
  t.sgd.lr = c.get_double("train.lr", t.sgd.lr);
  t.sgd.momentum = c.get_double("train.momentum", t.sgd.momentum);
  t.sgd.weight_decay = c.get_double("train.weight_decay", t.sgd.weight_decay);
  t.gamma = c.get_double("train.gamma", t.gamma);
  t.warmup_steps = static_cast<std::size_t>(c.get_int("train.warmup_steps", static_cast<std::int64_t>(t.warmup_steps)));
  if (c.has("train.lr_drop_epochs")) t.lr_drop_epochs = parse_list("train.lr_drop_epochs", c.get_string("train.lr_drop_epochs", ""));
  t.clip_norm = c.get_double("train.clip_norm", t.clip_norm);
  if (t.batch == 0) throw ConfigError("train.batch must be positive");

  r.eval.score_threshold = c.get_double("eval.score_threshold", r.eval.score_threshold);
  r.eval.nms_iou = c.get_double("eval.nms_iou", r.eval.nms_iou);
  r.ablate_seeds = static_cast<std::size_t>(c.get_int("ablate.seeds", static_cast<std::int64_t>(r.ablate_seeds)));
  r.ablate_threads = static_cast<std::size_t>(c.get_int("ablate.threads", static_cast<std::int64_t>(r.ablate_threads)));
  m.validate();
  return r;
}

Config RunConfig::to_config() const {
  Config c;
  c.set("seed", std::to_string(seed));
  c.set("corpus.dir", corpus_dir);
  c.set("out.dir", out_dir);
  c.set("corpus.seed", std::to_string(corpus.seed));
  c.set("corpus.count", std::to_string(corpus.count));
  c.set("corpus.size", std::to_string(corpus.size));
  c.set("corpus.min_objects", std::to_string(corpus.min_objects));
  c.set("corpus.max_objects", std::to_string(corpus.max_objects));
  c.set("corpus.night_fraction", format_double(corpus.night_fraction));
  c.set("corpus.noise", to_string(corpus.noise.kind));
  c.set("corpus.noise_structured", format_double(corpus.noise.structured));
  c.set("corpus.noise_sensor", format_double(corpus.noise.sensor));
  c.set("corpus.train_fraction", format_double(train_fraction));
  c.set("model.classes", std::to_string(model.classes));
  c.set("rsr.enabled", model.use_rsr ? "true" : "false");
  c.set("rsr.K", std::to_string(model.rsr.k));
  c.set("rsr.mode", to_string(model.rsr.mode));
  c.set("rsr.grid", std::to_string(model.rsr.grid_rows));
  c.set("rsr.encoder", model.rsr.encoder == EncoderKind::Dense ? "dense" : "patchwise");
  c.set("backbone.stem", std::to_string(model.backbone.stem_channels));
  c.set("backbone.widths", join(model.backbone.scale_channels));
  c.set("backbone.shared_channels", std::to_string(model.backbone.shared_channels));
  c.set("dfs.enabled", model.use_dfs ? "true" : "false");
  c.set("dfs.t", format_double(model.dfs.threshold));
  c.set("dfs.expert_channels", std::to_string(model.dfs.expert_channels));
  c.set("train.epochs", std::to_string(train.epochs));
  c.set("train.batch", std::to_string(train.batch));
  c.set("train.lr", format_double(train.sgd.lr));
  c.set("train.momentum", format_double(train.sgd.momentum));
  c.set("train.weight_decay", format_double(train.sgd.weight_decay));
  c.set("train.gamma", format_double(train.gamma));
  c.set("train.warmup_steps", std::to_string(train.warmup_steps));
  c.set("train.lr_drop_epochs", join(train.lr_drop_epochs));
  c.set("train.clip_norm", format_double(train.clip_norm));
  c.set("eval.score_threshold", format_double(eval.score_threshold));
  c.set("eval.nms_iou", format_double(eval.nms_iou));
  c.set("ablate.seeds", std::to_string(ablate_seeds));
  c.set("ablate.threads", std::to_string(ablate_threads));
  return c;
}

void apply_seed_override(RunConfig& run) {
  if (const char* env = std::getenv("CF_FUSE_SEED")) {
    run.seed = parse_number<std::uint64_t>("CF_FUSE_SEED", env);
    run.model.seed = run.seed;
  }
}

}  // namespace cffuse
