#pragma once

#include <string>
#include <vector>

#include "vlcount/core/rng.hpp"

namespace vlcount {

enum class ExemplarCombine { kSum, kConcat };

/// Architecture hyperparameters of the counting model. Two presets are
/// provided: full_scale() is the production geometry (512px images, 64x64
/// grid, 256-d features), toy() is the small configuration used by gradient
/// checks and the synthetic benchmark.
struct ModelConfig {
  int image_size = 512;   // H = W of the input image
  int grid = 64;          // h = w of the feature grid
  int d = 256;            // pipeline feature width
  int d_t = 512;          // teacher embedding width
  int heads = 4;          // attention heads
  int n_prototypes = 3;   // rows in each prototype branch
  int n1 = 3;             // prototype-update attention layers
  int n2 = 3;             // matching attention layers
  int encoder_layers = 2; // two-way blocks in the prompt encoder
  int zero_shot_tokens = 3;
  std::vector<int> head_channels = {128, 64, 32};
  double leaky_slope = 0.01;
  uint64_t backbone_seed = 1;
  std::string backbone = "toy";  // "toy" or "resnet50"
  std::string backbone_weights;  // weights path for the resnet50 adapter
  ExemplarCombine combine = ExemplarCombine::kSum;
  bool per_slot_embeddings = false;  // untied learnable exemplar slots
  bool per_branch_kd_projection = false;

  static ModelConfig full_scale() { return ModelConfig{}; }

  static ModelConfig toy() {
    ModelConfig c;
    c.image_size = 64;
    c.grid = 8;
    c.d = 16;
    c.d_t = 32;
    c.heads = 2;
    c.head_channels = {32, 16, 8};
    return c;
  }

  void validate() const {
    if (grid <= 0 || image_size <= 0 || d <= 0 || d_t <= 0) {
      throw std::invalid_argument("model config: sizes must be positive");
    }
    if (image_size % grid != 0) {
      throw std::invalid_argument("model config: image_size must be a multiple of grid");
    }
    if (head_channels.size() != 3) {
      throw std::invalid_argument("model config: regression head takes 3 channel sizes");
    }
    int up = grid * 8;  // three 2x upsamplings
    if (up != image_size) {
      throw std::invalid_argument(
          "model config: grid * 8 must equal image_size (three 2x upsamplings), got " +
          std::to_string(up) + " vs " + std::to_string(image_size));
    }
    if (d % heads != 0) {
      throw std::invalid_argument("model config: d must be divisible by heads");
    }
    if (n1 < 1 || n2 < 1 || encoder_layers < 1 || zero_shot_tokens < 1) {
      throw std::invalid_argument("model config: layer/token counts must be >= 1");
    }
  }

  void hash_into(uint64_t& h) const {
    auto mix = [&h](uint64_t v) { h = fnv1a64(reinterpret_cast<const char*>(&v), 8, h); };
    mix(image_size);
    mix(grid);
    mix(d);
    mix(d_t);
    mix(heads);
    mix(n_prototypes);
    mix(n1);
    mix(n2);
    mix(encoder_layers);
    mix(zero_shot_tokens);
    for (int c : head_channels) mix(c);
    mix(backbone_seed);
    h = fnv1a64(backbone.data(), backbone.size(), h);
    mix(static_cast<uint64_t>(combine));
    mix(per_slot_embeddings ? 1 : 0);
    mix(per_branch_kd_projection ? 1 : 0);
  }
};

}  // namespace vlcount
