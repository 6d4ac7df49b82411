#pragma once

#include "vlcount/core/rng.hpp"
#include "vlcount/core/tensor_math.hpp"
#include "vlcount/data/density.hpp"

namespace vlcount {

struct AugmentConfig {
  double flip_prob = 0.5;
  double jitter_prob = 0.8;
  double jitter_scale = 0.2;   // per-channel gain in [1-s, 1+s]
  double jitter_shift = 0.1;   // per-channel offset in [-t, t]
  double tile_prob = 0.25;
  int tile_factor = 2;         // k: replicate k x k then downscale back
  double density_sigma = 1.0;
};

/// A training view of a sample. `input_image` carries photometric jitter;
/// `teacher_image` shares the geometry but keeps the original colors, since
/// the distillation targets describe the un-jittered appearance.
struct AugmentedSample {
  Tensor input_image;    // {3, H, W}
  Tensor teacher_image;  // {3, H, W}
  std::vector<Box> boxes;
  std::vector<Point> points;
  Tensor density;  // {H, W}, re-rendered from the transformed points
};

inline Tensor hflip_image(const Tensor& img) {
  const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor out({c, h, w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(ch, y, x) = img.at(ch, y, w - 1 - x);
    }
  }
  return out;
}

/// Mirrors a point about the vertical axis of a width-w image: x -> (w-1) - x.
inline Point hflip_point(const Point& p, int width) {
  return {static_cast<double>(width - 1) - p[0], p[1]};
}

inline Box hflip_box(const Box& b, int width) {
  double w1 = static_cast<double>(width - 1);
  return {w1 - b[2], b[1], w1 - b[0], b[3]};
}

/// Per-channel affine photometric jitter; geometry untouched.
inline Tensor color_jitter(const Tensor& img, Rng& rng, double scale, double shift) {
  const int c = img.dim(0), hw = img.dim(1) * img.dim(2);
  Tensor out = img;
  for (int ch = 0; ch < c; ++ch) {
    double gain = rng.uniform(1.0 - scale, 1.0 + scale);
    double offset = rng.uniform(-shift, shift);
    double* plane = out.data() + static_cast<size_t>(ch) * hw;
    for (int i = 0; i < hw; ++i) {
      plane[i] = std::clamp(plane[i] * gain + offset, 0.0, 1.0);
    }
  }
  return out;
}

/// Replicates the image k x k, then downscales back to the original size.
/// Every replica keeps its annotations, so the object count grows by k^2 and
/// coordinates shrink by 1/k.
struct TileResult {
  Tensor image;
  std::vector<Box> boxes;
  std::vector<Point> points;
};

inline TileResult tile_sample(const Tensor& img, const std::vector<Box>& boxes,
                              const std::vector<Point>& points, int k) {
  const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor big({c, k * h, k * w});
  for (int ch = 0; ch < c; ++ch) {
    for (int ty = 0; ty < k; ++ty) {
      for (int tx = 0; tx < k; ++tx) {
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            big.at(ch, ty * h + y, tx * w + x) = img.at(ch, y, x);
          }
        }
      }
    }
  }
  TileResult out;
  out.image = resize_bilinear(big, h, w);
  const double inv_k = 1.0 / k;
  for (int ty = 0; ty < k; ++ty) {
    for (int tx = 0; tx < k; ++tx) {
      for (const Point& p : points) {
        out.points.push_back({(p[0] + tx * w) * inv_k, (p[1] + ty * h) * inv_k});
      }
      for (const Box& b : boxes) {
        out.boxes.push_back({(b[0] + tx * w) * inv_k, (b[1] + ty * h) * inv_k,
                             (b[2] + tx * w) * inv_k, (b[3] + ty * h) * inv_k});
      }
    }
  }
  return out;
}

/// Applies the training augmentation pipeline: optional horizontal flip and
/// tiling (geometric, seen by both streams), then photometric jitter on the
/// student input only. The density target is re-rendered from the final
/// point set.
inline AugmentedSample augment_sample(const Sample& s, const AugmentConfig& cfg,
                                      Rng& rng) {
  Tensor geo = s.image;
  std::vector<Box> boxes = s.boxes;
  std::vector<Point> points = s.points;
  const int w = s.width(), h = s.height();

  if (rng.bernoulli(cfg.flip_prob)) {
    geo = hflip_image(geo);
    for (Box& b : boxes) b = hflip_box(b, w);
    for (Point& p : points) p = hflip_point(p, w);
  }
  if (cfg.tile_factor > 1 && rng.bernoulli(cfg.tile_prob)) {
    TileResult t = tile_sample(geo, boxes, points, cfg.tile_factor);
    geo = std::move(t.image);
    boxes = std::move(t.boxes);
    points = std::move(t.points);
  }

  AugmentedSample out;
  out.teacher_image = geo;
  out.input_image = rng.bernoulli(cfg.jitter_prob)
                        ? color_jitter(geo, rng, cfg.jitter_scale, cfg.jitter_shift)
                        : geo;
  out.density = render_density(points, h, w, cfg.density_sigma);
  out.boxes = std::move(boxes);
  out.points = std::move(points);
  return out;
}

/// Evaluation view: no augmentation, density straight from the annotations.
inline AugmentedSample plain_sample(const Sample& s, double density_sigma) {
  AugmentedSample out;
  out.input_image = s.image;
  out.teacher_image = s.image;
  out.boxes = s.boxes;
  out.points = s.points;
  out.density = render_density(s.points, s.height(), s.width(), density_sigma);
  return out;
}

}  // namespace vlcount
