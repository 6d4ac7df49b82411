#pragma once

#include "vlcount/core/io.hpp"
#include "vlcount/model/backbone.hpp"

namespace vlcount {

/// Frozen bottleneck residual network loaded from a self-describing weights
/// file. Batch-norm layers are pre-folded by the exporter into a per-channel
/// scale and shift after each convolution, so the file holds only
/// (conv weight, scale, shift) triples.
///
/// File layout (little-endian):
///   magic "RNB1"
///   u32 stem_channels
///   u32 n_stages (4)
///   u32 blocks[n_stages]
///   u32 mid_width[n_stages]          bottleneck width; stage output = 4*mid
///   tensors, in order:
///     stem:   conv {stem, 3*7*7}, scale {stem}, shift {stem}
///     per stage s, per block b:
///       conv1 {mid, in},  scale, shift        (1x1)
///       conv2 {mid, mid*9}, scale, shift      (3x3, stride 2 when s>0, b=0)
///       conv3 {4*mid, mid}, scale, shift      (1x1)
///       if b == 0: down {4*mid, in}, scale, shift   (1x1 projection shortcut)
///
/// The standard 50-layer configuration is blocks {3,4,6,3} with mid widths
/// {64,128,256,512}; smaller files with the same layout load fine, which is
/// how the adapter is exercised in tests without a full pretrained dump.
class ResNetBackbone : public BackboneHandle {
 public:
  explicit ResNetBackbone(const std::string& path) {
    std::string blob = read_file_bytes(path);
    size_t pos = 0;
    if (blob.size() < 4 || blob.compare(0, 4, "RNB1") != 0) {
      throw std::runtime_error("resnet weights: bad magic in '" + path + "'");
    }
    pos = 4;
    stem_c_ = static_cast<int>(detail::get_u32(blob, pos));
    uint32_t n_stages = detail::get_u32(blob, pos);
    if (n_stages != 4) {
      throw std::runtime_error("resnet weights: expected 4 stages, got " +
                               std::to_string(n_stages));
    }
    for (int s = 0; s < 4; ++s) blocks_[s] = static_cast<int>(detail::get_u32(blob, pos));
    for (int s = 0; s < 4; ++s) mid_[s] = static_cast<int>(detail::get_u32(blob, pos));

    auto next = [&blob, &pos]() { return detail::get_tensor(blob, pos); };
    stem_w_ = next();
    stem_scale_ = next();
    stem_shift_ = next();
    int in_c = stem_c_;
    for (int s = 0; s < 4; ++s) {
      stages_[s].clear();
      for (int b = 0; b < blocks_[s]; ++b) {
        Block blk;
        blk.stride = (s > 0 && b == 0) ? 2 : 1;
        blk.w1 = next(); blk.s1 = next(); blk.h1 = next();
        blk.w2 = next(); blk.s2 = next(); blk.h2 = next();
        blk.w3 = next(); blk.s3 = next(); blk.h3 = next();
        if (b == 0) {
          blk.has_down = true;
          blk.wd = next(); blk.sd = next(); blk.hd = next();
        }
        expect_shape(blk.w1, mid_[s], in_c * 1, "conv1", s, b);
        expect_shape(blk.w2, mid_[s], mid_[s] * 9, "conv2", s, b);
        expect_shape(blk.w3, 4 * mid_[s], mid_[s] * 1, "conv3", s, b);
        stages_[s].push_back(std::move(blk));
        in_c = 4 * mid_[s];
      }
    }
    if (pos != blob.size()) {
      throw std::runtime_error("resnet weights: trailing bytes in '" + path + "'");
    }
    hash_ = fnv1a64(blob.data(), blob.size());
  }

  std::vector<Tensor> stages(const Tensor& image) const override {
    if (image.ndim() != 3 || image.dim(0) != 3 || image.dim(1) != image.dim(2)) {
      throw std::invalid_argument("backbone: expected square {3, H, W} image, got " +
                                  image.shape_str());
    }
    if (image.dim(1) < 32 || image.dim(1) % 32 != 0) {
      throw std::invalid_argument("backbone: image side must be a multiple of 32, got " +
                                  image.shape_str());
    }
    Tensor x = scale_shift(conv2d_plain(image, stem_w_, zero_bias(stem_c_), 7, 7, 3, 2),
                           stem_scale_, stem_shift_);
    x = relu_plain(x);
    x = max_pool_plain(x, 3, 2, 1);
    std::vector<Tensor> out;
    for (int s = 0; s < 4; ++s) {
      for (const Block& blk : stages_[s]) x = run_block(x, blk);
      if (s >= 1) out.push_back(x);  // the last three stages feed the model
    }
    return out;
  }

  int total_channels() const override {
    return 4 * (mid_[1] + mid_[2] + mid_[3]);
  }

  uint64_t weight_hash() const override { return hash_; }
  std::string name() const override { return "resnet50"; }

 private:
  struct Block {
    Tensor w1, s1, h1, w2, s2, h2, w3, s3, h3;
    Tensor wd, sd, hd;
    bool has_down = false;
    int stride = 1;
  };

  static void expect_shape(const Tensor& t, int r, int c, const char* what, int s,
                           int b) {
    if (t.dim(0) != r || t.dim(1) != c) {
      throw std::runtime_error("resnet weights: stage " + std::to_string(s) + " block " +
                               std::to_string(b) + " " + what + " has shape " +
                               t.shape_str() + ", expected (" + std::to_string(r) + "," +
                               std::to_string(c) + ")");
    }
  }

  static Tensor zero_bias(int c) { return Tensor({c}); }

  static Tensor scale_shift(Tensor x, const Tensor& scale, const Tensor& shift) {
    const int c = x.dim(0), hw = x.dim(1) * x.dim(2);
    for (int ch = 0; ch < c; ++ch) {
      double* plane = x.data() + static_cast<size_t>(ch) * hw;
      for (int i = 0; i < hw; ++i) plane[i] = plane[i] * scale[ch] + shift[ch];
    }
    return x;
  }

  Tensor run_block(const Tensor& x, const Block& blk) const {
    Tensor y = relu_plain(scale_shift(
        conv2d_plain(x, blk.w1, zero_bias(blk.w1.dim(0)), 1, 1, 0, 1), blk.s1, blk.h1));
    y = relu_plain(scale_shift(
        conv2d_plain(y, blk.w2, zero_bias(blk.w2.dim(0)), 3, 3, 1, blk.stride), blk.s2,
        blk.h2));
    y = scale_shift(conv2d_plain(y, blk.w3, zero_bias(blk.w3.dim(0)), 1, 1, 0, 1),
                    blk.s3, blk.h3);
    Tensor identity =
        blk.has_down
            ? scale_shift(conv2d_plain(x, blk.wd, zero_bias(blk.wd.dim(0)), 1, 1, 0,
                                       blk.stride),
                          blk.sd, blk.hd)
            : x;
    check_same_shape(y, identity, "resnet residual");
    y.add_(identity);
    return relu_plain(y);
  }

  int stem_c_ = 0;
  int blocks_[4] = {0, 0, 0, 0};
  int mid_[4] = {0, 0, 0, 0};
  Tensor stem_w_, stem_scale_, stem_shift_;
  std::vector<Block> stages_[4];
  uint64_t hash_ = 0;
};

inline std::shared_ptr<BackboneHandle> make_resnet50_backbone(
    const std::string& weights_path) {
  if (weights_path.empty()) {
    throw std::invalid_argument(
        "resnet50 backbone requires a weights file (backbone_weights in config)");
  }
  return std::make_shared<ResNetBackbone>(weights_path);
}

}  // namespace vlcount
