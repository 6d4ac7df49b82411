#pragma once

#include "vlcount/data/dataset.hpp"
#include "vlcount/model/config.hpp"
#include "vlcount/nn/attention.hpp"

namespace vlcount {

/// Builds exemplar tokens (shape embedding + learnable slot embedding + ROI
/// appearance, summed by default) and encodes them into the image feature
/// with a stack of two-way attention blocks, yielding the category-aware
/// feature f_E. Also provides the zero-shot token set.
class PromptEncoder {
 public:
  static constexpr int kMaxSlots = 8;  // capacity when per-slot embeddings are untied

  PromptEncoder() = default;
  PromptEncoder(ParameterStore& store, const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    const int d = cfg.d;
    shape1_ = Linear(store, "encoder.shape1", 2, d, rng);
    shape2_ = Linear(store, "encoder.shape2", d, d, rng);
    shape3_ = Linear(store, "encoder.shape3", d, d, rng);
    roi_proj_ = Linear(store, "encoder.roi_proj", d, d, rng);
    int slot_rows = cfg.per_slot_embeddings ? kMaxSlots : 1;
    slot_ = store.add("encoder.slot", random_normal(rng, {slot_rows, d}, 0.0, 0.02));
    zero_shot_ = store.add("encoder.zero_shot",
                           random_normal(rng, {cfg.zero_shot_tokens, d}, 0.0, 0.02));
    if (cfg.combine == ExemplarCombine::kConcat) {
      concat_proj_ = Linear(store, "encoder.concat_proj", 3 * d, d, rng);
    }
    for (int i = 0; i < cfg.encoder_layers; ++i) {
      blocks_.emplace_back(store, "encoder.block" + std::to_string(i), d, cfg.heads,
                           rng);
    }
  }

  /// Normalized (width, height) of each box, mapped through three linear
  /// layers (ReLU after the first two).
  Var shape_embed(const std::vector<Box>& boxes) const {
    Tensor wh({static_cast<int>(boxes.size()), 2});
    for (size_t i = 0; i < boxes.size(); ++i) {
      double w = boxes[i][2] - boxes[i][0];
      double h = boxes[i][3] - boxes[i][1];
      if (w <= 0 || h <= 0) {
        throw std::invalid_argument("shape_embed: box " + std::to_string(i) +
                                    " is degenerate (zero area)");
      }
      wh.at(i, 0) = w / cfg_.image_size;
      wh.at(i, 1) = h / cfg_.image_size;
    }
    return shape3_(relu(shape2_(relu(shape1_(Var::constant(wh))))));
  }

  /// Grid cells covered by a pixel-space box; a box that would cover no cell
  /// after clamping collapses to its nearest single cell.
  std::vector<int> roi_cells(const Box& box) const {
    const double stride = static_cast<double>(cfg_.image_size) / cfg_.grid;
    const int g = cfg_.grid;
    int x0 = std::clamp(static_cast<int>(std::floor(box[0] / stride)), 0, g - 1);
    int x1 = std::clamp(static_cast<int>(std::ceil(box[2] / stride)) - 1, 0, g - 1);
    int y0 = std::clamp(static_cast<int>(std::floor(box[1] / stride)), 0, g - 1);
    int y1 = std::clamp(static_cast<int>(std::ceil(box[3] / stride)) - 1, 0, g - 1);
    if (x1 < x0 || y1 < y0) {
      int cx = std::clamp(
          static_cast<int>(std::floor((box[0] + box[2]) * 0.5 / stride)), 0, g - 1);
      int cy = std::clamp(
          static_cast<int>(std::floor((box[1] + box[3]) * 0.5 / stride)), 0, g - 1);
      x0 = x1 = cx;
      y0 = y1 = cy;
    }
    std::vector<int> cells;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) cells.push_back(y * g + x);
    }
    return cells;
  }

  /// Average-pools each box's grid cells from f {hw, d} and projects to d.
  Var roi_appearance(const Var& f, const std::vector<Box>& boxes) const {
    std::vector<Var> rows;
    rows.reserve(boxes.size());
    for (const Box& b : boxes) rows.push_back(rows_mean_subset(f, roi_cells(b)));
    return roi_proj_(rows.size() == 1 ? rows[0] : concat_rows(rows));
  }

  /// Learnable slot embedding rows for n exemplars (tied: one row broadcast).
  Var slot_tokens(int n) const {
    if (cfg_.per_slot_embeddings) {
      if (n > kMaxSlots) {
        throw std::invalid_argument("prompt encoder: more exemplars than slots (" +
                                    std::to_string(n) + " > " +
                                    std::to_string(kMaxSlots) + ")");
      }
      return slice_rows(slot_, 0, n);
    }
    std::vector<Var> rows(n, slot_);
    return n == 1 ? slot_ : concat_rows(rows);
  }

  /// n exemplar tokens of width d.
  Var exemplar_tokens(const Var& f, const std::vector<Box>& boxes) const {
    if (boxes.empty()) {
      throw std::invalid_argument("prompt encoder: few-shot mode needs >= 1 exemplar");
    }
    Var shape = shape_embed(boxes);
    Var slot = slot_tokens(static_cast<int>(boxes.size()));
    Var roi = roi_appearance(f, boxes);
    if (cfg_.combine == ExemplarCombine::kConcat) {
      return concat_proj_(concat_cols({shape, slot, roi}));
    }
    return add(add(shape, slot), roi);
  }

  Var zero_shot_tokens() const { return zero_shot_; }

  /// Runs the two-way stack; returns the updated image stream f_E {hw, d}.
  Var encode(const Var& f, const Var& tokens) const {
    Var tok = tokens;
    Var img = f;
    for (const TwoWayBlock& blk : blocks_) {
      auto out = blk(tok, img);
      tok = out.tokens;
      img = out.image;
    }
    return img;
  }

 private:
  ModelConfig cfg_;
  Linear shape1_, shape2_, shape3_, roi_proj_, concat_proj_;
  Var slot_, zero_shot_;
  std::vector<TwoWayBlock> blocks_;
};

}  // namespace vlcount
