#pragma once

#include <memory>
#include <optional>

#include "vlcount/core/rng.hpp"
#include "vlcount/core/tensor_math.hpp"
#include "vlcount/data/synthetic.hpp"

namespace vlcount {

/// Frozen teacher: dense patch embeddings for images, one embedding per text
/// prompt, and a whole-image summary embedding. Implementations hold plain
/// tensors only — nothing here ever joins the autodiff tape.
class TeacherHandle {
 public:
  virtual ~TeacherHandle() = default;

  virtual int embed_dim() const = 0;

  /// Per-patch embeddings {h_t, w_t, d_t}.
  virtual Tensor dense_features(const Tensor& image) const = 0;

  /// Embedding {d_t} of one text prompt.
  virtual Tensor text_embedding(const std::string& prompt) const = 0;

  /// Whole-image summary embedding {d_t} (the class-token analog).
  virtual Tensor summary_feature(const Tensor& image) const = 0;

  virtual uint64_t weight_hash() const = 0;
  virtual std::string name() const = 0;
};

/// How the vision target r_v is pooled from the teacher's dense features.
enum class VisionVariant { kMaskPool, kGlobalPool, kClsToken };

inline std::string to_string(VisionVariant v) {
  switch (v) {
    case VisionVariant::kMaskPool: return "mask-pool";
    case VisionVariant::kGlobalPool: return "global-pool";
    case VisionVariant::kClsToken: return "cls-token";
  }
  return "?";
}

inline VisionVariant parse_vision_variant(const std::string& s) {
  if (s == "mask-pool") return VisionVariant::kMaskPool;
  if (s == "global-pool") return VisionVariant::kGlobalPool;
  if (s == "cls-token") return VisionVariant::kClsToken;
  throw std::invalid_argument("vision variant must be mask-pool|global-pool|cls-token, got '" + s + "'");
}

/// Averaged-then-normalized text embedding over a prompt set (unit norm).
inline Tensor text_representation(const std::vector<std::string>& prompts,
                                  const TeacherHandle& teacher) {
  if (prompts.empty()) {
    throw std::invalid_argument("text_representation: empty prompt set");
  }
  Tensor mean({teacher.embed_dim()});
  for (const std::string& p : prompts) mean.add_(teacher.text_embedding(p));
  mean.scale_(1.0 / static_cast<double>(prompts.size()));
  return l2_normalized(mean);
}

/// Min-max normalizes a map to [0,1]; an exactly constant map becomes all
/// ones so the threshold guard in mask_pool never triggers spuriously.
inline Tensor normalize_minmax(const Tensor& m) {
  double lo = m.min(), hi = m.max();
  Tensor out = m;
  if (hi - lo <= 0.0) {
    out.fill(1.0);
    return out;
  }
  double inv = 1.0 / (hi - lo);
  for (long long i = 0; i < out.size(); ++i) out[i] = (out[i] - lo) * inv;
  return out;
}

/// Cell-wise cosine similarity between dense features {h,w,d} and a unit
/// classifier vector {d}; zero-norm cells score 0.
inline Tensor cosine_map(const Tensor& feats, const Tensor& classifier) {
  const int ht = feats.dim(0), wt = feats.dim(1), dt = feats.dim(2);
  Tensor sim({ht, wt});
  for (int y = 0; y < ht; ++y) {
    for (int x = 0; x < wt; ++x) {
      const double* v = feats.data() + (static_cast<size_t>(y) * wt + x) * dt;
      double dot = 0, norm_sq = 0;
      for (int c = 0; c < dt; ++c) {
        dot += v[c] * classifier[c];
        norm_sq += v[c] * v[c];
      }
      sim.at(y, x) = norm_sq > 0 ? dot / std::sqrt(norm_sq) : 0.0;
    }
  }
  return sim;
}

/// Cell-wise cosine similarity between dense features and the prompt-set text
/// classifier, min-max normalized to [0,1].
inline Tensor dense_mask(const Tensor& image, const std::vector<std::string>& prompts,
                         const TeacherHandle& teacher) {
  Tensor feats = teacher.dense_features(image);
  Tensor classifier = text_representation(prompts, teacher);
  return normalize_minmax(cosine_map(feats, classifier));
}

/// Mask-weighted mean of patch embeddings over cells with mask >= threshold;
/// if no cell passes (or the mask is all zero) falls back to the weighted —
/// then plain — mean over all cells. Never fails.
inline Tensor mask_pool(const Tensor& feats, const Tensor& mask, double threshold) {
  const int ht = feats.dim(0), wt = feats.dim(1), dt = feats.dim(2);
  if (mask.dim(0) != ht || mask.dim(1) != wt) {
    throw std::invalid_argument("mask_pool: mask " + mask.shape_str() +
                                " does not match features " + feats.shape_str());
  }
  auto weighted = [&](bool thresholded) -> std::optional<Tensor> {
    Tensor out({dt});
    double total = 0;
    for (int y = 0; y < ht; ++y) {
      for (int x = 0; x < wt; ++x) {
        double w = mask.at(y, x);
        if (thresholded && w < threshold) continue;
        const double* v = feats.data() + (static_cast<size_t>(y) * wt + x) * dt;
        for (int c = 0; c < dt; ++c) out[c] += w * v[c];
        total += w;
      }
    }
    if (total <= 0) return std::nullopt;
    out.scale_(1.0 / total);
    return out;
  };
  if (auto r = weighted(true)) return *r;
  if (auto r = weighted(false)) return *r;
  // All-zero mask: plain global mean.
  Tensor out({dt});
  for (int i = 0; i < ht * wt; ++i) {
    const double* v = feats.data() + static_cast<size_t>(i) * dt;
    for (int c = 0; c < dt; ++c) out[c] += v[c];
  }
  out.scale_(1.0 / (ht * wt));
  return out;
}

struct TeacherTargets {
  Tensor r_v;  // {d_t} pooled vision representation (not normalized)
  Tensor r_l;  // {d_t} prompt-averaged text representation (unit norm)
};

/// Computes both distillation targets for one image/prompt-set pair.
inline TeacherTargets compute_targets(const Tensor& image,
                                      const std::vector<std::string>& prompts,
                                      const TeacherHandle& teacher,
                                      VisionVariant variant = VisionVariant::kMaskPool,
                                      double mask_threshold = 0.5) {
  TeacherTargets t;
  switch (variant) {
    case VisionVariant::kMaskPool: {
      Tensor feats = teacher.dense_features(image);
      Tensor mask = dense_mask(image, prompts, teacher);
      t.r_v = mask_pool(feats, mask, mask_threshold);
      break;
    }
    case VisionVariant::kGlobalPool: {
      Tensor feats = teacher.dense_features(image);
      Tensor ones({feats.dim(0), feats.dim(1)});
      ones.fill(1.0);
      t.r_v = mask_pool(feats, ones, 0.5);
      break;
    }
    case VisionVariant::kClsToken:
      t.r_v = teacher.summary_feature(image);
      break;
  }
  t.r_l = text_representation(prompts, teacher);
  return t;
}

/// Deterministic frozen toy teacher. A patch featurizer pools each p x p
/// patch to a small pixel grid, centers it, and applies a fixed random linear
/// map; vision and text share the final projection, and the text tower
/// embeds a category by rendering its canonical shape patch and reusing the
/// SAME featurizer, so both spaces are aligned by construction. Prompts with
/// no recognizable category fall back to a hashed pseudo-embedding.
class ToyTeacher : public TeacherHandle {
 public:
  explicit ToyTeacher(uint64_t seed, int d_t = 32, int patch = 8, int pool = 4,
                      int mid = 24)
      : d_t_(d_t), patch_(patch), pool_(pool), mid_(mid) {
    Rng rng(derive_seed(seed, 0x7EAC));
    feat_w_ = random_normal(rng, {3 * pool * pool, mid}, 0.0,
                            1.0 / std::sqrt(3.0 * pool * pool));
    proj_w_ = random_normal(rng, {mid, d_t}, 0.0, 1.0 / std::sqrt(double(mid)));
    hash_ = tensor_hash(feat_w_) ^ (tensor_hash(proj_w_) * 0x9E3779B97F4A7C15ull);
  }

  int embed_dim() const override { return d_t_; }

  Tensor dense_features(const Tensor& image) const override {
    if (image.ndim() != 3 || image.dim(0) != 3 || image.dim(1) % patch_ != 0 ||
        image.dim(2) % patch_ != 0) {
      throw std::invalid_argument("toy teacher: image " + image.shape_str() +
                                  " not divisible into " + std::to_string(patch_) +
                                  "-pixel patches");
    }
    const int ht = image.dim(1) / patch_, wt = image.dim(2) / patch_;
    Tensor out({ht, wt, d_t_});
    for (int py = 0; py < ht; ++py) {
      for (int px = 0; px < wt; ++px) {
        Tensor e = embed_patch(crop_patch(image, py, px));
        std::copy(e.data(), e.data() + d_t_,
                  out.data() + (static_cast<size_t>(py) * wt + px) * d_t_);
      }
    }
    return out;
  }

  Tensor text_embedding(const std::string& prompt) const override {
    if (auto cat = find_category_words(prompt)) {
      return embed_patch(canonical_patch(*cat));
    }
    // Hashed fallback keeps unknown prompts deterministic and in-range.
    Rng rng(fnv1a64(prompt.data(), prompt.size()));
    Tensor mid = random_normal(rng, {mid_}, 0.0, 1.0);
    return project(mid);
  }

  Tensor summary_feature(const Tensor& image) const override {
    return embed_patch(resize_bilinear(image, patch_, patch_));
  }

  uint64_t weight_hash() const override { return hash_; }
  std::string name() const override { return "toy"; }

 private:
  Tensor crop_patch(const Tensor& image, int py, int px) const {
    Tensor p({3, patch_, patch_});
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < patch_; ++y) {
        for (int x = 0; x < patch_; ++x) {
          p.at(c, y, x) = image.at(c, py * patch_ + y, px * patch_ + x);
        }
      }
    }
    return p;
  }

  /// psi: pool to pool_ x pool_, center at the gray background level, apply
  /// the fixed linear maps.
  Tensor embed_patch(const Tensor& patch) const {
    Tensor pooled = resize_area(patch);
    Tensor mid({mid_});
    for (int m = 0; m < mid_; ++m) {
      double acc = 0;
      for (long long i = 0; i < pooled.size(); ++i) {
        acc += (pooled[i] - 0.5) * feat_w_.at(static_cast<int>(i), m);
      }
      mid[m] = acc;
    }
    return project(mid);
  }

  Tensor project(const Tensor& mid) const {
    Tensor out({d_t_});
    for (int c = 0; c < d_t_; ++c) {
      double acc = 0;
      for (int m = 0; m < mid_; ++m) acc += mid[m] * proj_w_.at(m, c);
      out[c] = acc;
    }
    return out;
  }

  /// Area-average pooling of a {3,p,p} patch to the pool_ grid.
  Tensor resize_area(const Tensor& patch) const {
    const int p = patch.dim(1);
    Tensor out({3, pool_, pool_});
    const double step = static_cast<double>(p) / pool_;
    for (int c = 0; c < 3; ++c) {
      for (int oy = 0; oy < pool_; ++oy) {
        int y0 = static_cast<int>(oy * step), y1 = static_cast<int>((oy + 1) * step);
        y1 = std::max(y1, y0 + 1);
        for (int ox = 0; ox < pool_; ++ox) {
          int x0 = static_cast<int>(ox * step), x1 = static_cast<int>((ox + 1) * step);
          x1 = std::max(x1, x0 + 1);
          double acc = 0;
          for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) acc += patch.at(c, y, x);
          }
          out.at(c, oy, ox) = acc / ((y1 - y0) * (x1 - x0));
        }
      }
    }
    return out;
  }

  /// Scans prompt words for a known color and shape.
  std::optional<shapes::ParsedCategory> find_category_words(
      const std::string& prompt) const {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : prompt) {
      if (std::isalpha(static_cast<unsigned char>(ch))) {
        cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
      } else if (!cur.empty()) {
        words.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) words.push_back(std::move(cur));

    const shapes::ColorDef* color = nullptr;
    const std::string* shape = nullptr;
    for (const std::string& w : words) {
      if (!color) {
        for (const auto& c : shapes::colors()) {
          if (w == c.name) {
            color = &c;
            break;
          }
        }
      }
      if (!shape) {
        for (const auto& s : shapes::shape_names()) {
          if (w == s) {
            shape = &s;
            break;
          }
        }
      }
    }
    if (color && shape) return shapes::ParsedCategory{*color, *shape};
    return std::nullopt;
  }

  /// Renders the category's canonical appearance: its shape centered on the
  /// gray background, supersampled then area-pooled to patch size.
  Tensor canonical_patch(const shapes::ParsedCategory& cat) const {
    const int big = 4 * patch_;
    Tensor img = Tensor::full({3, big, big}, 0.5);
    shapes::draw_shape(img, cat.shape, cat.color, (big - 1) / 2.0, (big - 1) / 2.0,
                       big * 0.36);
    // Reduce 4x by averaging 4x4 blocks.
    Tensor out({3, patch_, patch_});
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < patch_; ++y) {
        for (int x = 0; x < patch_; ++x) {
          double acc = 0;
          for (int sy = 0; sy < 4; ++sy) {
            for (int sx = 0; sx < 4; ++sx) acc += img.at(c, 4 * y + sy, 4 * x + sx);
          }
          out.at(c, y, x) = acc / 16.0;
        }
      }
    }
    return out;
  }

  int d_t_, patch_, pool_, mid_;
  Tensor feat_w_, proj_w_;
  uint64_t hash_ = 0;
};

/// Decorator that counts every teacher evaluation; used to prove that
/// inference never touches the teacher.
class CallCountingTeacher : public TeacherHandle {
 public:
  explicit CallCountingTeacher(std::shared_ptr<TeacherHandle> inner)
      : inner_(std::move(inner)) {}

  int embed_dim() const override { return inner_->embed_dim(); }
  Tensor dense_features(const Tensor& image) const override {
    ++dense_calls_;
    return inner_->dense_features(image);
  }
  Tensor text_embedding(const std::string& prompt) const override {
    ++text_calls_;
    return inner_->text_embedding(prompt);
  }
  Tensor summary_feature(const Tensor& image) const override {
    ++summary_calls_;
    return inner_->summary_feature(image);
  }
  uint64_t weight_hash() const override { return inner_->weight_hash(); }
  std::string name() const override { return inner_->name(); }

  long long total_calls() const { return dense_calls_ + text_calls_ + summary_calls_; }
  long long dense_calls() const { return dense_calls_; }
  long long text_calls() const { return text_calls_; }
  void reset() { dense_calls_ = text_calls_ = summary_calls_ = 0; }

 private:
  std::shared_ptr<TeacherHandle> inner_;
  mutable long long dense_calls_ = 0;
  mutable long long text_calls_ = 0;
  mutable long long summary_calls_ = 0;
};

}  // namespace vlcount
