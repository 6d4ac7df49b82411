#pragma once

#include <Eigen/Dense>

#include "vlcount/core/tensor.hpp"

namespace vlcount {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

inline ECMap as_mat(const Tensor& t, int rows, int cols) {
  return ECMap(t.data(), rows, cols);
}

inline EMap as_mat(Tensor& t, int rows, int cols) {
  return EMap(t.data(), rows, cols);
}

/// C = A * B for 2-D tensors.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: incompatible shapes " + a.shape_str() +
                                " x " + b.shape_str());
  }
  Tensor c({a.dim(0), b.dim(1)});
  as_mat(c, c.dim(0), c.dim(1)).noalias() =
      as_mat(a, a.dim(0), a.dim(1)) * as_mat(b, b.dim(0), b.dim(1));
  return c;
}

inline Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) throw std::invalid_argument("transpose: need 2-D tensor");
  Tensor t({a.dim(1), a.dim(0)});
  as_mat(t, t.dim(0), t.dim(1)).noalias() = as_mat(a, a.dim(0), a.dim(1)).transpose();
  return t;
}

/// im2col for 3x3-style convolutions on {c,h,w} tensors, stride 1, symmetric
/// zero padding. Output is {h*w, c*kh*kw} so conv becomes one GEMM.
inline Tensor im2col(const Tensor& x, int kh, int kw, int pad) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor cols({h * w, c * kh * kw});
  double* out = cols.data();
  const double* in = x.data();
  for (int oy = 0; oy < h; ++oy) {
    for (int ox = 0; ox < w; ++ox) {
      double* row = out + (static_cast<size_t>(oy) * w + ox) * (c * kh * kw);
      int idx = 0;
      for (int ch = 0; ch < c; ++ch) {
        const double* plane = in + static_cast<size_t>(ch) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
          int iy = oy + ky - pad;
          for (int kx = 0; kx < kw; ++kx, ++idx) {
            int ix = ox + kx - pad;
            row[idx] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                           ? plane[static_cast<size_t>(iy) * w + ix]
                           : 0.0;
          }
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: scatter-add {h*w, c*kh*kw} back to {c,h,w}.
inline Tensor col2im(const Tensor& cols, int c, int h, int w, int kh, int kw, int pad) {
  Tensor x({c, h, w});
  double* out = x.data();
  const double* in = cols.data();
  for (int oy = 0; oy < h; ++oy) {
    for (int ox = 0; ox < w; ++ox) {
      const double* row = in + (static_cast<size_t>(oy) * w + ox) * (c * kh * kw);
      int idx = 0;
      for (int ch = 0; ch < c; ++ch) {
        double* plane = out + static_cast<size_t>(ch) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
          int iy = oy + ky - pad;
          for (int kx = 0; kx < kw; ++kx, ++idx) {
            int ix = ox + kx - pad;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
              plane[static_cast<size_t>(iy) * w + ix] += row[idx];
            }
          }
        }
      }
    }
  }
  return x;
}

/// Plain (non-differentiable) conv for frozen networks: x {cin,h,w},
/// weight {cout, cin*kh*kw}, bias {cout}, stride >= 1.
inline Tensor conv2d_plain(const Tensor& x, const Tensor& weight, const Tensor& bias,
                           int kh, int kw, int pad, int stride = 1) {
  const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int cout = weight.dim(0);
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (w + 2 * pad - kw) / stride + 1;
  Tensor y({cout, oh, ow});
  for (int oc = 0; oc < cout; ++oc) {
    const double* wrow = weight.data() + static_cast<size_t>(oc) * cin * kh * kw;
    double* plane = y.data() + static_cast<size_t>(oc) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bias.empty() ? 0.0 : bias[oc];
        int idx = 0;
        for (int ch = 0; ch < cin; ++ch) {
          const double* in = x.data() + static_cast<size_t>(ch) * h * w;
          for (int ky = 0; ky < kh; ++ky) {
            int iy = oy * stride + ky - pad;
            for (int kx = 0; kx < kw; ++kx, ++idx) {
              int ix = ox * stride + kx - pad;
              if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
                acc += wrow[idx] * in[static_cast<size_t>(iy) * w + ix];
              }
            }
          }
        }
        plane[static_cast<size_t>(oy) * ow + ox] = acc;
      }
    }
  }
  return y;
}

inline Tensor avg_pool2_plain(const Tensor& x) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor y({c, h / 2, w / 2});
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < h / 2; ++oy) {
      for (int ox = 0; ox < w / 2; ++ox) {
        y.at(ch, oy, ox) = 0.25 * (x.at(ch, 2 * oy, 2 * ox) + x.at(ch, 2 * oy, 2 * ox + 1) +
                                   x.at(ch, 2 * oy + 1, 2 * ox) + x.at(ch, 2 * oy + 1, 2 * ox + 1));
      }
    }
  }
  return y;
}

inline Tensor max_pool_plain(const Tensor& x, int k, int stride, int pad) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (w + 2 * pad - k) / stride + 1;
  Tensor y({c, oh, ow});
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double m = -1e300;
        for (int ky = 0; ky < k; ++ky) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= w) continue;
            m = std::max(m, x.at(ch, iy, ix));
          }
        }
        y.at(ch, oy, ox) = m;
      }
    }
  }
  return y;
}

inline Tensor relu_plain(const Tensor& x) {
  Tensor y = x;
  for (long long i = 0; i < y.size(); ++i) y[i] = std::max(0.0, y[i]);
  return y;
}

/// Bilinear resize of a {c,h,w} tensor to {c,oh,ow}, half-pixel centers
/// (align_corners=false convention).
inline Tensor resize_bilinear(const Tensor& x, int oh, int ow) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (oh == h && ow == w) return x;
  Tensor y({c, oh, ow});
  const double sy = static_cast<double>(h) / oh;
  const double sx = static_cast<double>(w) / ow;
  for (int oy = 0; oy < oh; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y0c = std::clamp(y0, 0, h - 1);
    int y1c = std::clamp(y0 + 1, 0, h - 1);
    for (int ox = 0; ox < ow; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x0c = std::clamp(x0, 0, w - 1);
      int x1c = std::clamp(x0 + 1, 0, w - 1);
      for (int ch = 0; ch < c; ++ch) {
        double v00 = x.at(ch, y0c, x0c), v01 = x.at(ch, y0c, x1c);
        double v10 = x.at(ch, y1c, x0c), v11 = x.at(ch, y1c, x1c);
        y.at(ch, oy, ox) = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                           wy * ((1 - wx) * v10 + wx * v11);
      }
    }
  }
  return y;
}

/// Separable Gaussian blur on {c,h,w}, truncated at 3 sigma, edge-clamped.
inline Tensor gaussian_blur(const Tensor& x, double sigma) {
  if (sigma <= 0.0) return x;
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += k[i + radius];
  }
  for (double& v : k) v /= norm;

  Tensor tmp({c, h, w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          int sxp = std::clamp(xx + i, 0, w - 1);
          acc += k[i + radius] * x.at(ch, y, sxp);
        }
        tmp.at(ch, y, xx) = acc;
      }
    }
  }
  Tensor out({c, h, w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          int syp = std::clamp(y + i, 0, h - 1);
          acc += k[i + radius] * tmp.at(ch, syp, xx);
        }
        out.at(ch, y, xx) = acc;
      }
    }
  }
  return out;
}

inline double dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "dot");
  double s = 0.0;
  for (long long i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

inline Tensor l2_normalized(const Tensor& a, double eps = 1e-12) {
  Tensor out = a;
  double n = l2_norm(a);
  out.scale_(1.0 / std::max(n, eps));
  return out;
}

}  // namespace vlcount
