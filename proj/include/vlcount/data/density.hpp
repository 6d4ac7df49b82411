#pragma once

#include "vlcount/data/dataset.hpp"

namespace vlcount {

/// Renders a ground-truth density map from point annotations. Each point
/// contributes a Gaussian truncated at 4*sigma and at the image boundary,
/// renormalized so its mass inside the map is exactly 1; the total therefore
/// equals the point count up to rounding error.
inline Tensor render_density(const std::vector<Point>& points, int height, int width,
                             double sigma) {
  if (sigma <= 0) throw std::invalid_argument("render_density: sigma must be positive");
  Tensor density({height, width});
  const double radius = 4.0 * sigma;
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
  for (size_t pi = 0; pi < points.size(); ++pi) {
    const Point& p = points[pi];
    if (p[0] < 0 || p[0] >= width || p[1] < 0 || p[1] >= height) {
      throw std::invalid_argument(
          "render_density: point " + std::to_string(pi) + " at (" +
          std::to_string(p[0]) + ", " + std::to_string(p[1]) + ") lies outside " +
          std::to_string(width) + "x" + std::to_string(height));
    }
    // Pixel (ix, iy) covers the point (ix, iy) on the annotation grid.
    int x0 = std::max(0, static_cast<int>(std::ceil(p[0] - radius)));
    int x1 = std::min(width - 1, static_cast<int>(std::floor(p[0] + radius)));
    int y0 = std::max(0, static_cast<int>(std::ceil(p[1] - radius)));
    int y1 = std::min(height - 1, static_cast<int>(std::floor(p[1] + radius)));
    double mass = 0.0;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        double dx = x - p[0], dy = y - p[1];
        mass += std::exp(-(dx * dx + dy * dy) * inv_two_sigma_sq);
      }
    }
    if (mass <= 0.0) continue;
    double inv_mass = 1.0 / mass;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        double dx = x - p[0], dy = y - p[1];
        density.at(y, x) +=
            std::exp(-(dx * dx + dy * dy) * inv_two_sigma_sq) * inv_mass;
      }
    }
  }
  return density;
}

}  // namespace vlcount
