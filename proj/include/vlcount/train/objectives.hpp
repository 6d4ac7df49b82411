#pragma once

#include "vlcount/core/autograd.hpp"

namespace vlcount {

/// The three loss components and their weighted total for one batch. The
/// total is assembled as density + (alpha * v_kd + (1 - alpha) * l_kd), in
/// exactly that floating-point association.
struct LossTerms {
  Var density;
  Var v_kd;
  Var l_kd;
  Var total;
  double alpha = 0.0;

  double density_value() const { return density.value()[0]; }
  double v_kd_value() const { return v_kd.value()[0]; }
  double l_kd_value() const { return l_kd.value()[0]; }
  double total_value() const { return total.value()[0]; }
};

inline void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in [0,1], got " + std::to_string(alpha));
  }
}

/// Count-normalized squared-error density loss:
///   (1 / 2B) * sum_k (1 / max(N_k, 1)) * ||G_k - R_k||^2.
inline Var density_loss(const std::vector<Var>& pred,
                                  const std::vector<Tensor>& gt,
                                  const std::vector<double>& counts) {
  if (pred.empty() || pred.size() != gt.size() || pred.size() != counts.size()) {
    throw std::invalid_argument("density_loss: batch lists must be nonempty and equal-sized");
  }
  Var acc;
  for (size_t k = 0; k < pred.size(); ++k) {
    check_same_shape(pred[k].value(), gt[k], "density_loss");
    Var err = squared_distance(pred[k], Var::constant(gt[k]));
    Var term = scale(err, 1.0 / std::max(counts[k], 1.0));
    acc = k == 0 ? term : add(acc, term);
  }
  return scale(acc, 1.0 / (2.0 * static_cast<double>(pred.size())));
}

/// Batch-mean distillation loss between predicted prototype summaries and
/// frozen teacher targets; Euclidean by default, squared when requested.
inline Var kd_loss(const std::vector<Var>& protos,
                             const std::vector<Tensor>& targets, bool squared = false) {
  if (protos.empty() || protos.size() != targets.size()) {
    throw std::invalid_argument("kd_loss: batch lists must be nonempty and equal-sized");
  }
  Var acc;
  for (size_t k = 0; k < protos.size(); ++k) {
    Tensor target = targets[k];
    if (protos[k].value().size() != target.size()) {
      throw std::invalid_argument("kd_loss: prototype " + protos[k].value().shape_str() +
                                  " vs target " + target.shape_str());
    }
    target = target.reshaped(protos[k].value().shape());
    Var term = squared
        ? squared_distance(protos[k], Var::constant(target))
        : euclidean_distance(protos[k], Var::constant(target));
    acc = k == 0 ? term : add(acc, term);
  }
  return scale(acc, 1.0 / static_cast<double>(protos.size()));
}

/// total = density + (alpha * v_kd + (1 - alpha) * l_kd)
inline LossTerms combine_losses(Var density, Var v_kd,
                                Var l_kd, double alpha) {
  check_alpha(alpha);
  LossTerms t;
  t.alpha = alpha;
  t.density = density;
  t.v_kd = v_kd;
  t.l_kd = l_kd;
  Var weighted =
      add(scale(v_kd, alpha), scale(l_kd, 1.0 - alpha));
  t.total = add(density, weighted);
  return t;
}

/// Mean absolute error and root-mean-squared error over per-image counts.
inline std::pair<double, double> mae_rmse(const std::vector<double>& gt,
                                          const std::vector<double>& pred) {
  if (gt.empty()) throw std::invalid_argument("mae_rmse: empty count lists");
  if (gt.size() != pred.size()) {
    throw std::invalid_argument("mae_rmse: " + std::to_string(gt.size()) + " ground-truth vs " +
                                std::to_string(pred.size()) + " predicted counts");
  }
  double abs_sum = 0, sq_sum = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    double e = pred[i] - gt[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  double n = static_cast<double>(gt.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

}  // namespace vlcount
