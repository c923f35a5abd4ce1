#include "cffuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "cffuse/pnm.hpp"
#include "cffuse/rng.hpp"

namespace cffuse {

std::string to_string(Regime regime) { return regime == Regime::Day ? "day" : "night"; }

Regime parse_regime(const std::string& text) {
  if (text == "day") return Regime::Day;
  if (text == "night") return Regime::Night;
  throw ConfigError("regime must be day or night, got '" + text + "'");
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Off: return "off";
    case NoiseKind::Checkerboard: return "checkerboard";
    case NoiseKind::Stripes: return "stripes";
    case NoiseKind::Mixed: return "mixed";
  }
  return "off";
}

NoiseKind parse_noise_kind(const std::string& text) {
  if (text == "off") return NoiseKind::Off;
  if (text == "checkerboard") return NoiseKind::Checkerboard;
  if (text == "stripes") return NoiseKind::Stripes;
  if (text == "mixed") return NoiseKind::Mixed;
  throw ConfigError("noise kind must be off, checkerboard, stripes or mixed, got '" + text + "'");
}

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

bool inside(const Box& b, double px, double py) {
  if (px < b.x1 || px >= b.x2 || py < b.y1 || py >= b.y2) return false;
  if (b.class_id == 0) return true;
  const double rx = 0.5 * b.width(), ry = 0.5 * b.height();
  const double dx = (px - b.cx()) / rx, dy = (py - b.cy()) / ry;
  return dx * dx + dy * dy <= 1.0;
}

// Per-pixel object index (-1 for background); later objects paint over
// earlier ones.
std::vector<int> paint_order(const std::vector<Box>& boxes, std::size_t h, std::size_t w) {
  std::vector<int> owner(h * w, -1);
  for (std::size_t b = 0; b < boxes.size(); ++b)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        if (inside(boxes[b], static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5))
          owner[y * w + x] = static_cast<int>(b);
  return owner;
}

// Structured pattern value in {-1, +1} at (x, y) for the chosen variant.
double pattern(int variant, std::size_t x, std::size_t y) {
  switch (variant) {
    case 0: return ((x + y) % 2 == 0) ? 1.0 : -1.0;  // checkerboard
    case 1: return (x % 2 == 0) ? 1.0 : -1.0;        // vertical stripes
    default: return (y % 2 == 0) ? 1.0 : -1.0;       // horizontal stripes
  }
}

int pick_variant(NoiseKind kind, Rng& rng) {
  switch (kind) {
    case NoiseKind::Checkerboard: return 0;
    case NoiseKind::Stripes: return 1 + static_cast<int>(rng.below(2));
    default: return static_cast<int>(rng.below(3));
  }
}

}  // namespace

Scene generate(std::uint64_t seed, std::size_t height, std::size_t width, Regime regime, std::size_t n_objects,
               const NoiseProfile& noise) {
  if (!is_pow2(height) || !is_pow2(width) || height < 32 || width < 32) {
    throw DimensionError("generate: scene size must be powers of two >= 32, got " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
  Rng rng(seed);
  const std::size_t h = height, w = width, plane = h * w;
  const bool night = regime == Regime::Night;

  // Objects: size bands small / medium / large relative to a 64 px scene.
  const double unit = static_cast<double>(std::min(h, w)) / 64.0;
  std::vector<Box> boxes;
  for (std::size_t n = 0; n < n_objects; ++n) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      const auto band = rng.below(3);
      const double lo = band == 0 ? 6.0 : band == 1 ? 11.0 : 19.0;
      const double hi = band == 0 ? 10.0 : band == 1 ? 18.0 : 28.0;
      const double bw = std::round(rng.uniform(lo, hi) * unit);
      const double bh = std::round(rng.uniform(lo, hi) * unit);
      Box b;
      b.x1 = std::floor(rng.uniform(0.0, static_cast<double>(w) - bw));
      b.y1 = std::floor(rng.uniform(0.0, static_cast<double>(h) - bh));
      b.x2 = b.x1 + bw;
      b.y2 = b.y1 + bh;
      b.class_id = static_cast<int>(rng.below(kSceneClasses));
      bool clash = false;
      for (const auto& o : boxes) clash = clash || iou(o, b) > 0.05 || (std::abs(o.cx() - b.cx()) < 4.0 * unit &&
                                                                         std::abs(o.cy() - b.cy()) < 4.0 * unit);
      if (!clash) {
        boxes.push_back(b);
        break;
      }
    }
  }
  const auto owner = paint_order(boxes, h, w);

  // Smooth backgrounds.
  double base_v[3];
  for (auto& b : base_v) b = rng.uniform(0.35, 0.6) * (night ? 0.35 : 1.0);
  const double base_i = rng.uniform(0.15, 0.3);
  const double fx = rng.uniform(0.5, 1.5), fy = rng.uniform(0.5, 1.5), phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double grad_amp = night ? 0.03 : 0.08;

  // Per-object appearance. Some objects are thermally cold in daylight,
  // so they are only visible in RGB; at night IR carries every object.
  struct Look {
    double rgb[3];
    double ir;
  };
  std::vector<Look> looks(boxes.size());
  for (auto& look : looks) {
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double contrast = rng.uniform(0.25, 0.4) * (night ? 0.2 : 1.0);
    for (std::size_t c = 0; c < 3; ++c) look.rgb[c] = sign * contrast * rng.uniform(0.7, 1.0);
    const bool cold = !night && rng.uniform() < 0.3;
    look.ir = cold ? rng.uniform(0.03, 0.06) : rng.uniform(0.45, 0.7);
  }

  std::vector<double> clean_v(3 * plane), clean_i(plane);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double sx = static_cast<double>(x) / static_cast<double>(w);
      const double sy = static_cast<double>(y) / static_cast<double>(h);
      const double smooth = std::sin(2.0 * std::numbers::pi * (fx * sx + fy * sy) + phase);
      const std::size_t i = y * w + x;
      const int o = owner[i];
      for (std::size_t c = 0; c < 3; ++c) {
        double v = base_v[c] + grad_amp * smooth;
        if (o >= 0) v += looks[static_cast<std::size_t>(o)].rgb[c];
        clean_v[c * plane + i] = std::clamp(v, 0.0, 1.0);
      }
      double ir = base_i + 0.04 * smooth;
      if (o >= 0) ir += looks[static_cast<std::size_t>(o)].ir;
      clean_i[i] = std::clamp(ir, 0.0, 1.0);
    }
  }

  std::vector<double> noisy_v = clean_v, noisy_i = clean_i;
  if (noise.kind != NoiseKind::Off) {
    const int variant_v = pick_variant(noise.kind, rng);
    const int variant_i = pick_variant(noise.kind, rng);
    const double sensor_v = noise.sensor * (night ? 3.0 : 1.0);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = y * w + x;
        const bool background = owner[i] < 0;
        const double pv = background ? noise.structured * pattern(variant_v, x, y) : 0.0;
        const double pi = background ? noise.structured * pattern(variant_i, x, y) : 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
          noisy_v[c * plane + i] = std::clamp(clean_v[c * plane + i] + pv + sensor_v * rng.normal(), 0.0, 1.0);
        }
        noisy_i[i] = std::clamp(clean_i[i] + pi + noise.sensor * rng.normal(), 0.0, 1.0);
      }
    }
  }

  Scene s;
  s.seed = seed;
  s.regime = regime;
  s.boxes = std::move(boxes);
  s.clean_v = Tensor({3, h, w}, std::move(clean_v));
  s.clean_i = Tensor({1, h, w}, std::move(clean_i));
  s.image_v = Tensor({3, h, w}, std::move(noisy_v));
  s.image_i = Tensor({1, h, w}, std::move(noisy_i));
  return s;
}

std::vector<Scene> generate_corpus(const CorpusSpec& spec) {
  if (spec.min_objects > spec.max_objects) throw ConfigError("corpus: min_objects exceeds max_objects");
  std::vector<Scene> scenes;
  scenes.reserve(spec.count);
  for (std::size_t k = 0; k < spec.count; ++k) {
    const std::uint64_t seed = derive_seed(spec.seed, k);
    Rng meta(derive_seed(seed, 0xC0FFEE));
    const Regime regime = meta.uniform() < spec.night_fraction ? Regime::Night : Regime::Day;
    const std::size_t n = spec.min_objects + meta.below(spec.max_objects - spec.min_objects + 1);
    scenes.push_back(generate(seed, spec.size, spec.size, regime, n, spec.noise));
  }
  return scenes;
}

Scene quantize(const Scene& scene) {
  Scene q = scene;
  q.image_v = from_image8(to_image8(scene.image_v));
  q.image_i = from_image8(to_image8(scene.image_i));
  q.clean_v = from_image8(to_image8(scene.clean_v));
  q.clean_i = from_image8(to_image8(scene.clean_i));
  return q;
}

Split split_by_index(std::size_t count, double train_fraction) {
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(count)));
  Split s;
  for (std::size_t i = 0; i < count; ++i) (i < n_train ? s.train : s.test).push_back(i);
  return s;
}

namespace {

std::string stem(const std::string& dir, std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%05zu", id);
  return (std::filesystem::path(dir) / buf).string();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void write_corpus(const std::string& dir, const std::vector<Scene>& scenes) {
  std::filesystem::create_directories(dir);
  std::ofstream boxes((std::filesystem::path(dir) / "boxes.csv").string());
  std::ofstream meta((std::filesystem::path(dir) / "scenes.csv").string());
  if (!boxes || !meta) throw FormatError(dir + ": cannot create corpus index files");
  boxes << "image_id,class_id,x1,y1,x2,y2\n";
  meta << "image_id,seed,regime,height,width\n";
  for (std::size_t id = 0; id < scenes.size(); ++id) {
    const auto& s = scenes[id];
    const auto base = stem(dir, id);
    write_pnm(base + "_rgb.ppm", to_image8(s.image_v));
    write_pnm(base + "_ir.pgm", to_image8(s.image_i));
    write_pnm(base + "_rgb_clean.ppm", to_image8(s.clean_v));
    write_pnm(base + "_ir_clean.pgm", to_image8(s.clean_i));
    meta << id << ',' << s.seed << ',' << to_string(s.regime) << ',' << s.image_v.dim(1) << ',' << s.image_v.dim(2)
         << '\n';
    for (const auto& b : s.boxes) {
      boxes << id << ',' << b.class_id << ',' << b.x1 << ',' << b.y1 << ',' << b.x2 << ',' << b.y2 << '\n';
    }
  }
}

std::vector<Scene> read_corpus(const std::string& dir) {
  const auto meta_path = (std::filesystem::path(dir) / "scenes.csv").string();
  const auto boxes_path = (std::filesystem::path(dir) / "boxes.csv").string();
  std::ifstream meta(meta_path, std::ios::binary);
  if (!meta) throw FormatError(meta_path + ": cannot open at byte 0");
  std::vector<Scene> scenes;
  std::string line;
  std::size_t offset = 0;
  auto next_line = [&](std::ifstream& is) {
    offset = static_cast<std::size_t>(is.tellg());
    return static_cast<bool>(std::getline(is, line));
  };
  next_line(meta);  // header
  while (next_line(meta)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 5) throw FormatError(meta_path + ": expected 5 fields at byte " + std::to_string(offset));
    Scene s;
    std::size_t id = 0, h = 0, w = 0;
    try {
      id = std::stoull(cells[0]);
      s.seed = std::stoull(cells[1]);
      s.regime = parse_regime(cells[2]);
      h = std::stoull(cells[3]);
      w = std::stoull(cells[4]);
    } catch (const std::exception& e) {
      throw FormatError(meta_path + ": bad field (" + e.what() + ") at byte " + std::to_string(offset));
    }
    if (id != scenes.size()) throw FormatError(meta_path + ": non-sequential image_id at byte " + std::to_string(offset));
    const auto base = stem(dir, id);
    s.image_v = from_image8(read_pnm(base + "_rgb.ppm"));
    s.image_i = from_image8(read_pnm(base + "_ir.pgm"));
    s.clean_v = from_image8(read_pnm(base + "_rgb_clean.ppm"));
    s.clean_i = from_image8(read_pnm(base + "_ir_clean.pgm"));
    const Shape want_v{3, h, w}, want_i{1, h, w};
    if (s.image_v.dims() != want_v || s.clean_v.dims() != want_v || s.image_i.dims() != want_i ||
        s.clean_i.dims() != want_i) {
      throw FormatError(base + ": image dims disagree with scenes.csv entry at byte " + std::to_string(offset));
    }
    scenes.push_back(std::move(s));
  }

  std::ifstream boxes(boxes_path, std::ios::binary);
  if (!boxes) throw FormatError(boxes_path + ": cannot open at byte 0");
  next_line(boxes);
  while (next_line(boxes)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 6) throw FormatError(boxes_path + ": expected 6 fields at byte " + std::to_string(offset));
    std::size_t id = 0;
    Box b;
    try {
      id = std::stoull(cells[0]);
      b.class_id = std::stoi(cells[1]);
      b.x1 = std::stod(cells[2]);
      b.y1 = std::stod(cells[3]);
      b.x2 = std::stod(cells[4]);
      b.y2 = std::stod(cells[5]);
    } catch (const std::exception& e) {
      throw FormatError(boxes_path + ": bad field (" + e.what() + ") at byte " + std::to_string(offset));
    }
    if (id >= scenes.size()) throw FormatError(boxes_path + ": unknown image_id at byte " + std::to_string(offset));
    const double h = static_cast<double>(scenes[id].image_v.dim(1)), w = static_cast<double>(scenes[id].image_v.dim(2));
    if (!(b.x2 > b.x1 && b.y2 > b.y1) || b.x1 < 0 || b.y1 < 0 || b.x2 > w || b.y2 > h || b.class_id < 0 ||
        b.class_id >= static_cast<int>(kSceneClasses)) {
      throw FormatError(boxes_path + ": box out of bounds at byte " + std::to_string(offset));
    }
    scenes[id].boxes.push_back(b);
  }
  return scenes;
}

std::vector<std::uint8_t> object_mask(const Scene& scene) {
  const std::size_t h = scene.clean_v.dim(1), w = scene.clean_v.dim(2);
  const auto owner = paint_order(scene.boxes, h, w);
  std::vector<std::uint8_t> mask(h * w);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = owner[i] >= 0 ? 1 : 0;
  return mask;
}

double rgb_object_contrast(const Scene& scene) {
  const auto mask = object_mask(scene);
  const std::size_t plane = mask.size();
  const auto v = scene.clean_v.data();
  double obj = 0.0, bg = 0.0;
  std::size_t n_obj = 0, n_bg = 0;
  std::vector<double> luma(plane);
  for (std::size_t i = 0; i < plane; ++i) luma[i] = (v[i] + v[plane + i] + v[2 * plane + i]) / 3.0;
  for (std::size_t i = 0; i < plane; ++i) {
    if (mask[i]) {
      obj += luma[i];
      ++n_obj;
    } else {
      bg += luma[i];
      ++n_bg;
    }
  }
  if (n_obj == 0 || n_bg == 0) return 0.0;
  const double bg_mean = bg / static_cast<double>(n_bg);
  double diff = 0.0;
  for (std::size_t i = 0; i < plane; ++i)
    if (mask[i]) diff += std::abs(luma[i] - bg_mean);
  return diff / static_cast<double>(n_obj);
}

}  // namespace cffuse
