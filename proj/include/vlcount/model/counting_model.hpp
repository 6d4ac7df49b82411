#pragma once

#include "vlcount/model/backbone.hpp"
#include "vlcount/model/prompt_encoder.hpp"
#include "vlcount/model/resnet50.hpp"

namespace vlcount {

enum class CountingMode { kFewShot, kZeroShot };

inline std::string to_string(CountingMode m) {
  return m == CountingMode::kFewShot ? "few-shot" : "zero-shot";
}

inline CountingMode parse_mode(const std::string& s) {
  if (s == "few-shot") return CountingMode::kFewShot;
  if (s == "zero-shot") return CountingMode::kZeroShot;
  throw std::invalid_argument("mode must be 'few-shot' or 'zero-shot', got '" + s + "'");
}

/// Everything one forward pass produces: the density map plus the
/// intermediate tensors the losses and tests need.
struct ForwardResult {
  Var density;  // {H, W}, nonnegative
  Var proto_v;  // {n, d} final vision prototypes
  Var proto_l;  // {n, d} final language prototypes
  Var kd_v;     // {1, d_t} row-averaged projected vision prototype
  Var kd_l;     // {1, d_t} row-averaged projected language prototype
  Var feature;  // {hw, d} projected backbone feature f
  Var encoded;  // {hw, d} exemplar-aware feature f_E
  Var corr;     // {hw, d} correlation map

  double count() const { return density.value().sum(); }
};

/// The few-shot counting student. A frozen backbone supplies multi-scale
/// features; a trainable projection forms f; the prompt encoder mixes
/// exemplar tokens into f via two-way attention; learnable vision/language
/// prototypes are updated by a weight-shared cross-attention stack over f_E,
/// projected for distillation, and matched back against f_E to form the
/// correlation map; a convolutional head regresses the density map, whose
/// sum is the count estimate.
class CountingModel {
 public:
  CountingModel(const ModelConfig& cfg, uint64_t seed)
      : cfg_(cfg), backbone_(make_backbone(cfg)) {
    cfg_.validate();
    Rng rng(derive_seed(seed, 0x5EED));
    const int d = cfg_.d;

    input_proj_ = Linear(store_, "proj.input", backbone_->total_channels(), d, rng);
    encoder_ = PromptEncoder(store_, cfg_, rng);

    proto_v_ = store_.add("protos.vision", random_normal(rng, {cfg_.n_prototypes, d}, 0.0, 0.02));
    proto_l_ = store_.add("protos.language", random_normal(rng, {cfg_.n_prototypes, d}, 0.0, 0.02));

    for (int i = 0; i < cfg_.n1; ++i) {
      update_.emplace_back(store_, "update.block" + std::to_string(i), d, cfg_.heads,
                           rng);
    }
    kd_proj_v_ = Linear(store_, "kd.proj", d, cfg_.d_t, rng);
    kd_proj_l_ = cfg_.per_branch_kd_projection
                     ? Linear(store_, "kd.proj_l", d, cfg_.d_t, rng)
                     : kd_proj_v_;
    for (int i = 0; i < cfg_.n2; ++i) {
      match_.emplace_back(store_, "match.block" + std::to_string(i), d, cfg_.heads,
                          rng);
    }

    const auto& hc = cfg_.head_channels;
    head_w1_ = store_.add("head.conv1.weight", conv_init(rng, hc[0], d, 3));
    head_b1_ = store_.add("head.conv1.bias", Tensor({hc[0]}));
    head_w2_ = store_.add("head.conv2.weight", conv_init(rng, hc[1], hc[0], 3));
    head_b2_ = store_.add("head.conv2.bias", Tensor({hc[1]}));
    head_w3_ = store_.add("head.conv3.weight", conv_init(rng, hc[2], hc[1], 3));
    head_b3_ = store_.add("head.conv3.bias", Tensor({hc[2]}));
    // The final layer starts as an exactly-constant map summing to one:
    // zero weights, bias 1/(H*W). Its inputs are post-leaky-ReLU (sign
    // skewed positive), so any weight draw puts a common-mode offset of one
    // sign under every pixel at once; a bad draw or an early overshoot can
    // push the whole map left of the output ReLU, where the gradient is
    // identically zero and training never recovers. The neutral start keeps
    // every pixel alive with positive margin and no initial mass error to
    // overcorrect.
    head_w4_ = store_.add("head.final.weight", Tensor({1, hc[2]}));
    const double px = static_cast<double>(cfg_.image_size) * cfg_.image_size;
    head_b4_ = store_.add("head.final.bias", Tensor::full({1}, 1.0 / px));
  }

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  const BackboneHandle& backbone() const { return *backbone_; }
  const PromptEncoder& encoder() const { return encoder_; }

  /// Projected backbone feature f {hw, d} for an image. The backbone stages
  /// are computed outside the autodiff tape; only the projection is
  /// trainable.
  Var extract_feature(const Tensor& image) const {
    if (image.ndim() != 3 || image.dim(1) != cfg_.image_size ||
        image.dim(2) != cfg_.image_size) {
      throw std::invalid_argument("forward: expected {3, " +
                                  std::to_string(cfg_.image_size) + ", " +
                                  std::to_string(cfg_.image_size) + "} image, got " +
                                  image.shape_str());
    }
    Tensor concat = multi_scale_concat(backbone_->stages(image), cfg_.grid);
    return input_proj_(Var::constant(cells_from_chw(concat)));
  }

  /// Runs the prototype-update stack. Both branches pass through the SAME
  /// layer objects, so the weights are shared by construction.
  std::pair<Var, Var> update_prototypes(const Var& encoded) const {
    Var pv = proto_v_;
    Var pl = proto_l_;
    for (const CrossAttentionBlock& blk : update_) {
      pv = blk(pv, encoded);
      pl = blk(pl, encoded);
    }
    return {pv, pl};
  }

  Var kd_project_vision(const Var& protos) const { return kd_proj_v_(protos); }
  Var kd_project_language(const Var& protos) const { return kd_proj_l_(protos); }

  /// Matching stack: spatial cells query the 2n concatenated prototypes.
  Var match(const Var& encoded, const Var& pv, const Var& pl) const {
    Var keys = concat_rows({pv, pl});
    Var corr = encoded;
    for (const CrossAttentionBlock& blk : match_) corr = blk(corr, keys);
    return corr;
  }

  /// Regression head: three 3x3 conv + leaky-ReLU + 2x upsample stages, a
  /// final per-pixel linear layer, and max(0, .) for nonnegativity.
  Var regress(const Var& corr) const {
    Var x = reshape(transpose(corr), {cfg_.d, cfg_.grid, cfg_.grid});
    x = upsample2x(leaky_relu(conv2d(x, head_w1_, head_b1_, 3, 3, 1), cfg_.leaky_slope));
    x = upsample2x(leaky_relu(conv2d(x, head_w2_, head_b2_, 3, 3, 1), cfg_.leaky_slope));
    x = upsample2x(leaky_relu(conv2d(x, head_w3_, head_b3_, 3, 3, 1), cfg_.leaky_slope));
    x = relu(conv2d(x, head_w4_, head_b4_, 1, 1, 0));
    return reshape(x, {cfg_.image_size, cfg_.image_size});
  }

  ForwardResult forward(const Tensor& image, const std::vector<Box>& boxes,
                        CountingMode mode) const {
    ForwardResult r;
    r.feature = extract_feature(image);
    Var tokens = mode == CountingMode::kFewShot
                     ? encoder_.exemplar_tokens(r.feature, boxes)
                     : encoder_.zero_shot_tokens();
    r.encoded = encoder_.encode(r.feature, tokens);
    auto [pv, pl] = update_prototypes(r.encoded);
    r.proto_v = pv;
    r.proto_l = pl;
    r.kd_v = rows_mean_all(kd_project_vision(pv));
    r.kd_l = rows_mean_all(kd_project_language(pl));
    r.corr = match(r.encoded, pv, pl);
    r.density = regress(r.corr);
    return r;
  }

  ForwardResult forward(const Sample& sample, CountingMode mode) const {
    return forward(sample.image, sample.boxes, mode);
  }

 private:
  static Tensor conv_init(Rng& rng, int cout, int cin, int k) {
    return init::xavier(rng, cin * k * k, cout, {cout, cin * k * k});
  }

  static Var rows_mean_all(const Var& m) {
    std::vector<int> rows(m.value().dim(0));
    for (size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
    return rows_mean_subset(m, rows);
  }

  ModelConfig cfg_;
  std::shared_ptr<BackboneHandle> backbone_;
  ParameterStore store_;
  Linear input_proj_;
  PromptEncoder encoder_;
  Var proto_v_, proto_l_;
  std::vector<CrossAttentionBlock> update_;
  Linear kd_proj_v_, kd_proj_l_;
  std::vector<CrossAttentionBlock> match_;
  Var head_w1_, head_b1_, head_w2_, head_b2_, head_w3_, head_b3_, head_w4_, head_b4_;
};

}  // namespace vlcount
