#pragma once

#include "vlcount/nn/layers.hpp"

namespace vlcount {

/// Multi-head scaled dot-product attention. The output projection is
/// zero-initialized, so residual blocks built on top start as the identity.
class MultiheadAttention {
 public:
  MultiheadAttention() = default;
  MultiheadAttention(ParameterStore& store, const std::string& name, int dim, int heads,
                     Rng& rng)
      : heads_(heads),
        head_dim_(dim / heads),
        q_proj_(store, name + ".q", dim, dim, rng),
        k_proj_(store, name + ".k", dim, dim, rng),
        v_proj_(store, name + ".v", dim, dim, rng),
        out_proj_(store, name + ".out", dim, dim, rng, WeightInit::kZero) {
    if (dim % heads != 0) {
      throw std::invalid_argument("attention: dim " + std::to_string(dim) +
                                  " not divisible by heads " + std::to_string(heads));
    }
  }

  /// query {nq, d}, key/value {nk, d} -> {nq, d}.
  Var operator()(const Var& query, const Var& key, const Var& value) const {
    Var q = q_proj_(query);
    Var k = k_proj_(key);
    Var v = v_proj_(value);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(head_dim_));
    std::vector<Var> head_outs;
    head_outs.reserve(heads_);
    for (int h = 0; h < heads_; ++h) {
      Var qh = slice_cols(q, h * head_dim_, (h + 1) * head_dim_);
      Var kh = slice_cols(k, h * head_dim_, (h + 1) * head_dim_);
      Var vh = slice_cols(v, h * head_dim_, (h + 1) * head_dim_);
      Var attn = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt_d));
      head_outs.push_back(matmul(attn, vh));
    }
    return out_proj_(heads_ == 1 ? head_outs[0] : concat_cols(head_outs));
  }

 private:
  int heads_ = 0, head_dim_ = 0;
  Linear q_proj_, k_proj_, v_proj_, out_proj_;
};

/// Pre-norm residual cross-attention block, optionally followed by a
/// pre-norm residual feed-forward block. Exactly the identity at init.
class CrossAttentionBlock {
 public:
  CrossAttentionBlock() = default;
  CrossAttentionBlock(ParameterStore& store, const std::string& name, int dim, int heads,
                      Rng& rng, bool with_ffn = true, int ffn_mult = 4)
      : with_ffn_(with_ffn),
        norm_q_(store, name + ".norm_q", dim),
        norm_kv_(store, name + ".norm_kv", dim),
        attn_(store, name + ".attn", dim, heads, rng) {
    if (with_ffn_) {
      norm_ffn_ = LayerNorm(store, name + ".norm_ffn", dim);
      ffn_ = Mlp(store, name + ".ffn", dim, ffn_mult * dim, rng);
    }
  }

  /// x {nq, d} attends into memory {nk, d}.
  Var operator()(const Var& x, const Var& memory) const {
    Var kv = norm_kv_(memory);
    Var out = add(x, attn_(norm_q_(x), kv, kv));
    if (with_ffn_) out = add(out, ffn_(norm_ffn_(out)));
    return out;
  }

 private:
  bool with_ffn_ = false;
  LayerNorm norm_q_, norm_kv_, norm_ffn_;
  MultiheadAttention attn_;
  Mlp ffn_;
};

/// One block of bidirectional token<->image attention: tokens self-attend,
/// read from the image, pass through a feed-forward, then the image reads
/// back from the updated tokens. All four sub-blocks are pre-norm residual
/// and identity at init.
class TwoWayBlock {
 public:
  TwoWayBlock() = default;
  TwoWayBlock(ParameterStore& store, const std::string& name, int dim, int heads,
              Rng& rng, int ffn_mult = 4)
      : norm_self_(store, name + ".norm_self", dim),
        self_attn_(store, name + ".self_attn", dim, heads, rng),
        token_to_image_(store, name + ".t2i", dim, heads, rng, /*with_ffn=*/false),
        norm_ffn_(store, name + ".norm_ffn", dim),
        ffn_(store, name + ".ffn", dim, ffn_mult * dim, rng),
        image_to_token_(store, name + ".i2t", dim, heads, rng, /*with_ffn=*/false) {}

  struct Result {
    Var tokens;
    Var image;
  };

  Result operator()(const Var& tokens, const Var& image) const {
    Var t = norm_self_(tokens);
    Var tok = add(tokens, self_attn_(t, t, t));
    tok = token_to_image_(tok, image);
    tok = add(tok, ffn_(norm_ffn_(tok)));
    Var img = image_to_token_(image, tok);
    return {tok, img};
  }

 private:
  LayerNorm norm_self_;
  MultiheadAttention self_attn_;
  CrossAttentionBlock token_to_image_;
  LayerNorm norm_ffn_;
  Mlp ffn_;
  CrossAttentionBlock image_to_token_;
};

}  // namespace vlcount
