#pragma once

#include <memory>

#include "vlcount/core/rng.hpp"
#include "vlcount/core/tensor_math.hpp"
#include "vlcount/model/config.hpp"

namespace vlcount {

/// Frozen feature extractor. Implementations return the raw per-stage feature
/// maps; resizing to the working grid, concatenation and the trainable linear
/// projection happen in the model so no gradient can reach these weights.
class BackboneHandle {
 public:
  virtual ~BackboneHandle() = default;

  /// Stage feature maps (shallow to deep), each {c_i, h_i, w_i}.
  virtual std::vector<Tensor> stages(const Tensor& image) const = 0;

  /// Sum of stage channel counts (input width of the projection).
  virtual int total_channels() const = 0;

  virtual uint64_t weight_hash() const = 0;
  virtual std::string name() const = 0;
};

/// Small frozen 3-stage convolutional net materialized from a seed. Weights
/// are random (fixed once drawn), biases zero, so an all-zeros image maps to
/// all-zeros features. Each stage halves resolution; after the stem pool the
/// deepest stage sits at 1/8 of the input.
class ToyBackbone : public BackboneHandle {
 public:
  explicit ToyBackbone(uint64_t seed) {
    Rng rng(derive_seed(seed, 0xB0B0));
    w1_ = he_init(rng, kC1, 3, 3);
    w2_ = he_init(rng, kC2, kC1, 3);
    w3_ = he_init(rng, kC3, kC2, 3);
    b1_ = Tensor({kC1});
    b2_ = Tensor({kC2});
    b3_ = Tensor({kC3});
  }

  std::vector<Tensor> stages(const Tensor& image) const override {
    if (image.ndim() != 3 || image.dim(0) != 3) {
      throw std::invalid_argument("backbone: expected {3, H, W} image, got " +
                                  image.shape_str());
    }
    if (image.dim(1) != image.dim(2)) {
      throw std::invalid_argument("backbone: image must be square, got " +
                                  image.shape_str());
    }
    if (image.dim(1) < 8 || image.dim(1) % 8 != 0) {
      throw std::invalid_argument("backbone: image side must be a multiple of 8, got " +
                                  image.shape_str());
    }
    Tensor s1 = avg_pool2_plain(relu_plain(conv2d_plain(image, w1_, b1_, 3, 3, 1, 1)));
    Tensor s2 = avg_pool2_plain(relu_plain(conv2d_plain(s1, w2_, b2_, 3, 3, 1, 1)));
    Tensor s3 = avg_pool2_plain(relu_plain(conv2d_plain(s2, w3_, b3_, 3, 3, 1, 1)));
    return {s1, s2, s3};
  }

  int total_channels() const override { return kC1 + kC2 + kC3; }

  uint64_t weight_hash() const override {
    uint64_t h = 1469598103934665603ull;
    for (const Tensor* t : {&w1_, &w2_, &w3_, &b1_, &b2_, &b3_}) {
      h = fnv1a64(reinterpret_cast<const char*>(t->data()),
                  static_cast<size_t>(t->size()) * sizeof(double), h);
    }
    return h;
  }

  std::string name() const override { return "toy"; }

 private:
  static constexpr int kC1 = 8, kC2 = 16, kC3 = 32;

  static Tensor he_init(Rng& rng, int cout, int cin, int k) {
    Tensor w({cout, cin * k * k});
    double std = std::sqrt(2.0 / (cin * k * k));
    for (long long i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, std);
    return w;
  }

  Tensor w1_, w2_, w3_, b1_, b2_, b3_;
};

/// Resizes every stage to the working grid and concatenates channels
/// shallow-to-deep. This is the fixed, documented ordering consumed by the
/// trainable projection.
inline Tensor multi_scale_concat(const std::vector<Tensor>& stage_features, int grid) {
  int total_c = 0;
  for (const Tensor& s : stage_features) total_c += s.dim(0);
  Tensor out({total_c, grid, grid});
  int off = 0;
  for (const Tensor& s : stage_features) {
    Tensor r = (s.dim(1) == grid && s.dim(2) == grid) ? s : resize_bilinear(s, grid, grid);
    std::copy(r.data(), r.data() + r.size(),
              out.data() + static_cast<size_t>(off) * grid * grid);
    off += r.dim(0);
  }
  return out;
}

/// {c, h, w} feature stack -> {h*w, c} cell-major matrix (row per grid cell).
inline Tensor cells_from_chw(const Tensor& chw) {
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  Tensor out({h * w, c});
  for (int ch = 0; ch < c; ++ch) {
    const double* plane = chw.data() + static_cast<size_t>(ch) * h * w;
    for (int i = 0; i < h * w; ++i) out.at(i, ch) = plane[i];
  }
  return out;
}

// Defined in resnet50.hpp; counting_model.hpp pulls both in.
inline std::shared_ptr<BackboneHandle> make_resnet50_backbone(
    const std::string& weights_path);

inline std::shared_ptr<BackboneHandle> make_backbone(const ModelConfig& cfg) {
  if (cfg.backbone == "toy") return std::make_shared<ToyBackbone>(cfg.backbone_seed);
  if (cfg.backbone == "resnet50") return make_resnet50_backbone(cfg.backbone_weights);
  throw std::invalid_argument("unknown backbone '" + cfg.backbone + "'");
}

}  // namespace vlcount
