#pragma once

#include "vlcount/nn/module.hpp"

namespace vlcount {

/// Clips the global gradient norm over all parameters in the store to
/// `max_norm`; returns the pre-clip norm.
inline double clip_global_norm(ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, v] : store.entries()) {
    const Tensor& g = v.node()->grad;
    if (g.empty()) continue;
    for (long long i = 0; i < g.size(); ++i) sq += g[i] * g[i];
  }
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double s = max_norm / norm;
    for (const auto& [name, v] : store.entries()) {
      Tensor& g = v.node()->grad;
      if (!g.empty()) g.scale_(s);
    }
  }
  return norm;
}

/// AdamW with decoupled weight decay: p -= lr * (mhat / (sqrt(vhat)+eps) + wd*p).
class AdamW {
 public:
  struct Options {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
  };

  AdamW() = default;
  explicit AdamW(Options opt) : opt_(opt) {}

  const Options& options() const { return opt_; }
  long long step_count() const { return step_; }

  void step(ParameterStore& store) {
    if (m_.empty()) {
      m_.resize(store.size());
      v_.resize(store.size());
      for (size_t i = 0; i < store.size(); ++i) {
        m_[i] = Tensor(store.entries()[i].second.value().shape());
        v_[i] = Tensor(store.entries()[i].second.value().shape());
      }
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
    for (size_t i = 0; i < store.size(); ++i) {
      const Var& var = store.entries()[i].second;
      const Tensor& g = var.node()->grad;
      if (g.empty()) continue;
      Tensor& p = var.node()->value;
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      for (long long j = 0; j < p.size(); ++j) {
        m[j] = opt_.beta1 * m[j] + (1.0 - opt_.beta1) * g[j];
        v[j] = opt_.beta2 * v[j] + (1.0 - opt_.beta2) * g[j] * g[j];
        double mhat = m[j] / bc1;
        double vhat = v[j] / bc2;
        p[j] -= opt_.lr * (mhat / (std::sqrt(vhat) + opt_.eps) +
                           opt_.weight_decay * p[j]);
      }
    }
  }

  void save(std::string& out) const {
    detail::put_u64(out, static_cast<uint64_t>(step_));
    detail::put_u64(out, m_.size());
    for (size_t i = 0; i < m_.size(); ++i) {
      detail::put_tensor(out, m_[i]);
      detail::put_tensor(out, v_[i]);
    }
  }

  void load(const std::string& in, size_t& pos) {
    step_ = static_cast<long long>(detail::get_u64(in, pos));
    uint64_t n = detail::get_u64(in, pos);
    m_.resize(n);
    v_.resize(n);
    for (uint64_t i = 0; i < n; ++i) {
      m_[i] = detail::get_tensor(in, pos);
      v_[i] = detail::get_tensor(in, pos);
    }
  }

 private:
  Options opt_;
  long long step_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace vlcount
