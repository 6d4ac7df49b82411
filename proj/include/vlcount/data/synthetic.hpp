#pragma once

#include "vlcount/data/augment.hpp"

namespace vlcount {

/// Configuration of the generated counting benchmark.
///
/// Every image contains several instances of one target category named
/// "<color> <shape>", plus distractor shapes of other categories. Domain A is
/// the clean training domain; domain B adds heavier clutter, occluding bars,
/// blur and sensor noise, and is used for cross-domain evaluation. The
/// category pool is split so evaluation categories never occur in training.
struct SyntheticConfig {
  int image_size = 64;
  int n_train = 240;
  int n_val = 24;
  int n_test = 100;  // per evaluation split
  int count_min = 4;
  int count_max = 12;
  double radius_min = 3.0;
  double radius_max = 6.5;
  int exemplars = 3;  // boxes kept per image (largest instances)
  double density_sigma = 1.0;
  int clutter_a_min = 2;
  int clutter_a_max = 4;
  int clutter_b_min = 5;
  int clutter_b_max = 9;
  int bars_min = 1;
  int bars_max = 3;
  double blur_sigma = 0.7;
  double noise_std = 0.02;
  int train_categories = 25;  // remainder of the pool is held out for tests
};

namespace shapes {

struct ColorDef {
  const char* name;
  double r, g, b;
};

inline const std::vector<ColorDef>& colors() {
  static const std::vector<ColorDef> c = {
      {"red", 0.85, 0.10, 0.10},    {"green", 0.10, 0.75, 0.10},
      {"blue", 0.15, 0.20, 0.90},   {"yellow", 0.90, 0.85, 0.10},
      {"magenta", 0.85, 0.15, 0.80}, {"cyan", 0.10, 0.80, 0.85},
      {"orange", 0.95, 0.55, 0.05}};
  return c;
}

inline const std::vector<std::string>& shape_names() {
  static const std::vector<std::string> s = {"circle", "square", "triangle", "diamond",
                                             "cross"};
  return s;
}

/// Full category pool, "<color> <shape>" for every combination.
inline std::vector<std::string> category_pool() {
  std::vector<std::string> out;
  for (const ColorDef& c : colors()) {
    for (const std::string& s : shape_names()) {
      out.push_back(std::string(c.name) + " " + s);
    }
  }
  return out;
}

struct ParsedCategory {
  ColorDef color;
  std::string shape;
};

/// Splits "<color> <shape>"; throws on unknown names.
inline ParsedCategory parse_category(const std::string& category) {
  auto space = category.find(' ');
  if (space == std::string::npos) {
    throw std::invalid_argument("category '" + category + "' is not '<color> <shape>'");
  }
  std::string color = category.substr(0, space);
  std::string shape = category.substr(space + 1);
  for (const ColorDef& c : colors()) {
    if (color == c.name) {
      for (const std::string& s : shape_names()) {
        if (shape == s) return {c, s};
      }
      throw std::invalid_argument("unknown shape '" + shape + "'");
    }
  }
  throw std::invalid_argument("unknown color '" + color + "'");
}

inline bool inside_shape(const std::string& shape, double x, double y, double cx,
                         double cy, double r) {
  double dx = x - cx, dy = y - cy;
  if (shape == "circle") return dx * dx + dy * dy <= r * r;
  if (shape == "square") return std::abs(dx) <= 0.88 * r && std::abs(dy) <= 0.88 * r;
  if (shape == "diamond") return std::abs(dx) + std::abs(dy) <= 1.15 * r;
  if (shape == "cross") {
    return (std::abs(dx) <= 0.35 * r && std::abs(dy) <= r) ||
           (std::abs(dy) <= 0.35 * r && std::abs(dx) <= r);
  }
  if (shape == "triangle") {
    // Upright triangle: apex (0,-r), base corners (+-0.95r, +0.75r).
    double ax = 0, ay = -r, bx = -0.95 * r, by = 0.75 * r, cx2 = 0.95 * r,
           cy2 = 0.75 * r;
    auto side = [](double px, double py, double qx, double qy, double rx, double ry) {
      return (qx - px) * (ry - py) - (qy - py) * (rx - px);
    };
    double d1 = side(ax, ay, bx, by, dx, dy);
    double d2 = side(bx, by, cx2, cy2, dx, dy);
    double d3 = side(cx2, cy2, ax, ay, dx, dy);
    bool has_neg = d1 < 0 || d2 < 0 || d3 < 0;
    bool has_pos = d1 > 0 || d2 > 0 || d3 > 0;
    return !(has_neg && has_pos);
  }
  throw std::invalid_argument("unknown shape '" + shape + "'");
}

/// Paints one shape with 2x2 supersampled coverage blending.
inline void draw_shape(Tensor& img, const std::string& shape, const ColorDef& color,
                       double cx, double cy, double r) {
  const int h = img.dim(1), w = img.dim(2);
  int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
  int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + r + 1)));
  int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
  int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + r + 1)));
  const double sub[2] = {-0.25, 0.25};
  const double rgb[3] = {color.r, color.g, color.b};
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      int hits = 0;
      for (double sy : sub) {
        for (double sx : sub) {
          hits += inside_shape(shape, x + sx, y + sy, cx, cy, r) ? 1 : 0;
        }
      }
      if (hits == 0) continue;
      double cov = hits / 4.0;
      for (int ch = 0; ch < 3; ++ch) {
        double& v = img.at(ch, y, x);
        v = v * (1.0 - cov) + rgb[ch] * cov;
      }
    }
  }
}

}  // namespace shapes

namespace detail {

struct Instance {
  double cx, cy, r;
};

inline bool far_enough(const std::vector<Instance>& placed, double cx, double cy,
                       double r, double slack) {
  for (const Instance& p : placed) {
    double dx = cx - p.cx, dy = cy - p.cy;
    double need = (r + p.r) * slack;
    if (dx * dx + dy * dy < need * need) return false;
  }
  return true;
}

}  // namespace detail

/// Renders one annotated image of `category` in the given domain ("A" clean /
/// "B" shifted). Deterministic in `rng`.
inline Sample make_sample(const SyntheticConfig& cfg, const std::string& category,
                          const std::string& domain,
                          const std::vector<std::string>& clutter_pool, Rng& rng) {
  const int size = cfg.image_size;
  const bool domain_b = domain == "B";
  shapes::ParsedCategory target = shapes::parse_category(category);

  Sample s;
  s.category = category;
  s.domain = domain;
  s.image = Tensor::full({3, size, size}, 0.5);

  // Targets first (placement only), then clutter placement avoiding targets,
  // then painting: clutter below, targets on top.
  int n_target = rng.uniform_int(cfg.count_min, cfg.count_max);
  std::vector<detail::Instance> targets;
  for (int i = 0; i < n_target; ++i) {
    for (int attempt = 0; attempt < 80; ++attempt) {
      double r = rng.uniform(cfg.radius_min, cfg.radius_max);
      double margin = r + 1.5;
      double cx = rng.uniform(margin, size - 1 - margin);
      double cy = rng.uniform(margin, size - 1 - margin);
      if (attempt == 79 || detail::far_enough(targets, cx, cy, r, 0.95)) {
        targets.push_back({cx, cy, r});
        break;
      }
    }
  }

  int n_clutter = domain_b ? rng.uniform_int(cfg.clutter_b_min, cfg.clutter_b_max)
                           : rng.uniform_int(cfg.clutter_a_min, cfg.clutter_a_max);
  std::vector<detail::Instance> clutter;
  std::vector<shapes::ParsedCategory> clutter_cats;
  for (int i = 0; i < n_clutter && !clutter_pool.empty(); ++i) {
    std::string cat = clutter_pool[rng.uniform_int(0, clutter_pool.size() - 1)];
    if (cat == category) continue;  // never draw extra target instances
    for (int attempt = 0; attempt < 40; ++attempt) {
      double r = rng.uniform(cfg.radius_min * 0.8, cfg.radius_max * 0.9);
      double margin = r + 1.0;
      double cx = rng.uniform(margin, size - 1 - margin);
      double cy = rng.uniform(margin, size - 1 - margin);
      if (detail::far_enough(targets, cx, cy, r, 0.8)) {
        clutter.push_back({cx, cy, r});
        clutter_cats.push_back(shapes::parse_category(cat));
        break;
      }
    }
  }

  for (size_t i = 0; i < clutter.size(); ++i) {
    shapes::draw_shape(s.image, clutter_cats[i].shape, clutter_cats[i].color,
                       clutter[i].cx, clutter[i].cy, clutter[i].r);
  }
  for (const detail::Instance& t : targets) {
    shapes::draw_shape(s.image, target.shape, target.color, t.cx, t.cy, t.r);
    s.points.push_back({t.cx, t.cy});
  }

  if (domain_b) {
    int n_bars = rng.uniform_int(cfg.bars_min, cfg.bars_max);
    for (int i = 0; i < n_bars; ++i) {
      bool vertical = rng.bernoulli(0.5);
      int thickness = rng.uniform_int(2, 4);
      int pos = rng.uniform_int(0, size - thickness);
      double shade = rng.uniform(0.2, 0.8);
      for (int t = 0; t < thickness; ++t) {
        for (int u = 0; u < size; ++u) {
          int y = vertical ? u : pos + t;
          int x = vertical ? pos + t : u;
          for (int ch = 0; ch < 3; ++ch) s.image.at(ch, y, x) = shade;
        }
      }
    }
    if (cfg.blur_sigma > 0) s.image = gaussian_blur(s.image, cfg.blur_sigma);
    if (cfg.noise_std > 0) {
      for (long long i = 0; i < s.image.size(); ++i) {
        s.image[i] = std::clamp(s.image[i] + rng.normal(0.0, cfg.noise_std), 0.0, 1.0);
      }
    }
  }

  // Exemplar boxes: the largest instances, clamped to the image.
  std::vector<detail::Instance> by_size = targets;
  std::sort(by_size.begin(), by_size.end(),
            [](const auto& a, const auto& b) { return a.r > b.r; });
  int n_box = std::min<int>(cfg.exemplars, by_size.size());
  for (int i = 0; i < n_box; ++i) {
    const auto& t = by_size[i];
    s.boxes.push_back({std::max(0.0, t.cx - t.r), std::max(0.0, t.cy - t.r),
                       std::min<double>(size - 1, t.cx + t.r),
                       std::min<double>(size - 1, t.cy + t.r)});
  }
  return s;
}

/// Deterministic train/test split of the category pool.
struct CategorySplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

inline CategorySplit split_categories(const SyntheticConfig& cfg, uint64_t seed) {
  std::vector<std::string> pool = shapes::category_pool();
  Rng rng(derive_seed(seed, 0xCA7));
  rng.shuffle(pool);
  CategorySplit out;
  int n_train = std::min<int>(cfg.train_categories, pool.size() - 1);
  out.train.assign(pool.begin(), pool.begin() + n_train);
  out.test.assign(pool.begin() + n_train, pool.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

/// Generates the full benchmark on disk: images/, annotations.json and
/// manifest.json under `out_dir`. Splits: "train" and "val" draw from the
/// training categories in domain A; "test_a" and "test_b" draw from the
/// held-out categories in domains A and B respectively.
inline std::string generate_synthetic(const SyntheticConfig& cfg,
                                      const std::string& out_dir, uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "images");
  CategorySplit cats = split_categories(cfg, seed);

  nlohmann::ordered_json manifest;
  manifest["seed"] = seed;
  manifest["config"] = {{"image_size", cfg.image_size},
                        {"n_train", cfg.n_train},
                        {"n_val", cfg.n_val},
                        {"n_test", cfg.n_test},
                        {"count_min", cfg.count_min},
                        {"count_max", cfg.count_max},
                        {"radius_min", cfg.radius_min},
                        {"radius_max", cfg.radius_max},
                        {"exemplars", cfg.exemplars},
                        {"density_sigma", cfg.density_sigma},
                        {"clutter_a_min", cfg.clutter_a_min},
                        {"clutter_a_max", cfg.clutter_a_max},
                        {"clutter_b_min", cfg.clutter_b_min},
                        {"clutter_b_max", cfg.clutter_b_max},
                        {"bars_min", cfg.bars_min},
                        {"bars_max", cfg.bars_max},
                        {"blur_sigma", cfg.blur_sigma},
                        {"noise_std", cfg.noise_std},
                        {"train_categories", cfg.train_categories}};
  manifest["categories_train"] = cats.train;
  manifest["categories_test"] = cats.test;
  manifest["samples"] = nlohmann::ordered_json::array();

  std::map<std::string, Annotation> annotations;
  uint64_t index = 0;
  auto emit_split = [&](const std::string& split, const std::string& domain, int count,
                        const std::vector<std::string>& pool) {
    for (int i = 0; i < count; ++i, ++index) {
      Rng rng(derive_seed(seed, index + 1));
      std::string category = pool[rng.uniform_int(0, pool.size() - 1)];
      Sample s = make_sample(cfg, category, domain, pool, rng);
      char name[64];
      std::snprintf(name, sizeof(name), "images/%s_%04d.ppm", split.c_str(), i);
      save_ppm((fs::path(out_dir) / name).string(), s.image);
      annotations[name] = {s.boxes, s.points, s.category};
      manifest["samples"].push_back({{"image", name},
                                     {"split", split},
                                     {"domain", domain},
                                     {"category", category},
                                     {"count", s.count()}});
    }
  };
  emit_split("train", "A", cfg.n_train, cats.train);
  emit_split("val", "A", cfg.n_val, cats.train);
  emit_split("test_a", "A", cfg.n_test, cats.test);
  emit_split("test_b", "B", cfg.n_test, cats.test);

  save_annotations((fs::path(out_dir) / "annotations.json").string(), annotations);
  std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  std::ofstream out(manifest_path);
  out << manifest.dump(2) << "\n";
  return manifest_path;
}

}  // namespace vlcount
