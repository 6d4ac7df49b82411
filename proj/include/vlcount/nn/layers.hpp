#pragma once

#include <string>

#include "vlcount/nn/module.hpp"

namespace vlcount {

enum class WeightInit { kXavier, kZero };

/// Affine map y = x W + b with W {in, out}.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng,
         WeightInit w_init = WeightInit::kXavier) {
    Tensor w = w_init == WeightInit::kZero ? Tensor({in, out})
                                           : init::xavier(rng, in, out, {in, out});
    weight_ = store.add(name + ".weight", std::move(w));
    bias_ = store.add(name + ".bias", Tensor({out}));
  }

  Var operator()(const Var& x) const {
    return add_rowvec(matmul(x, weight_), bias_);
  }

  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }

 private:
  Var weight_, bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, int dim) {
    gain_ = store.add(name + ".gain", Tensor::full({dim}, 1.0));
    bias_ = store.add(name + ".bias", Tensor({dim}));
  }

  Var operator()(const Var& x) const { return layer_norm_rows(x, gain_, bias_); }

 private:
  Var gain_, bias_;
};

/// Two-layer feed-forward block. The second projection is zero-initialized so
/// that a residual wrapper starts as the identity.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, int dim, int hidden, Rng& rng)
      : fc1_(store, name + ".fc1", dim, hidden, rng),
        fc2_(store, name + ".fc2", hidden, dim, rng, WeightInit::kZero) {}

  Var operator()(const Var& x) const { return fc2_(relu(fc1_(x))); }

 private:
  Linear fc1_, fc2_;
};

}  // namespace vlcount
