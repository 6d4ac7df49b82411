#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "vlcount/core/autograd.hpp"
#include "vlcount/core/io.hpp"
#include "vlcount/core/rng.hpp"

namespace vlcount {

/// Ordered registry of named trainable parameters. Modules register their
/// parameters here; the optimizer, checkpointing and hashing all iterate the
/// registry in insertion order so behaviour is independent of map internals.
class ParameterStore {
 public:
  Var add(const std::string& name, Tensor init) {
    if (index_.count(name)) {
      throw std::invalid_argument("ParameterStore: duplicate parameter '" + name + "'");
    }
    Var v = Var::param(std::move(init));
    index_[name] = params_.size();
    params_.push_back({name, v});
    return v;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Var get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw std::invalid_argument("ParameterStore: unknown parameter '" + name + "'");
    }
    return params_[it->second].second;
  }

  const std::vector<std::pair<std::string, Var>>& entries() const { return params_; }
  size_t size() const { return params_.size(); }

  long long scalar_count() const {
    long long n = 0;
    for (const auto& [name, v] : params_) n += v.value().size();
    return n;
  }

  void zero_grad() {
    for (auto& [name, v] : params_) v.zero_grad();
  }

  /// Order-sensitive hash of every parameter value; changes iff some weight
  /// changed. Used by tests to prove that frozen modules stay frozen.
  uint64_t value_hash() const {
    uint64_t h = 1469598103934665603ull;
    for (const auto& [name, v] : params_) {
      h = fnv1a64(name.data(), name.size(), h);
      const Tensor& t = v.value();
      h = fnv1a64(reinterpret_cast<const char*>(t.data()),
                  static_cast<size_t>(t.size()) * sizeof(double), h);
    }
    return h;
  }

  void save(std::string& out) const {
    detail::put_u64(out, params_.size());
    for (const auto& [name, v] : params_) {
      detail::put_string(out, name);
      detail::put_tensor(out, v.value());
    }
  }

  /// Loads values into the already-registered parameters; the stored names and
  /// shapes must match the registry exactly.
  void load(const std::string& in, size_t& pos) {
    uint64_t n = detail::get_u64(in, pos);
    if (n != params_.size()) {
      throw std::runtime_error("ParameterStore: checkpoint has " + std::to_string(n) +
                               " parameters, model has " + std::to_string(params_.size()));
    }
    for (size_t i = 0; i < n; ++i) {
      std::string name = detail::get_string(in, pos);
      Tensor t = detail::get_tensor(in, pos);
      if (name != params_[i].first) {
        throw std::runtime_error("ParameterStore: parameter order mismatch at '" + name +
                                 "', expected '" + params_[i].first + "'");
      }
      if (!t.same_shape(params_[i].second.value())) {
        throw std::runtime_error("ParameterStore: shape mismatch for '" + name + "': " +
                                 t.shape_str() + " vs " +
                                 params_[i].second.value().shape_str());
      }
      params_[i].second.mutable_value() = std::move(t);
    }
  }

 private:
  std::vector<std::pair<std::string, Var>> params_;
  std::map<std::string, size_t> index_;
};

namespace init {

/// Xavier/Glorot uniform.
inline Tensor xavier(Rng& rng, int fan_in, int fan_out, std::vector<int> shape) {
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  return random_uniform(rng, std::move(shape), -limit, limit);
}

}  // namespace init

}  // namespace vlcount
