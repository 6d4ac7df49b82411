#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "vlcount/core/io.hpp"
#include "vlcount/core/rng.hpp"
#include "vlcount/core/tensor_math.hpp"

namespace vlcount {
namespace {

TEST(Tensor, ConstructAndIndex) {
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6);
  EXPECT_EQ(t.ndim(), 2);
  EXPECT_EQ(t.dim(0), 2);
  EXPECT_EQ(t.dim(1), 3);
  for (long long i = 0; i < t.size(); ++i) EXPECT_EQ(t[i], 0.0);
  t.at(1, 2) = 7.5;
  EXPECT_EQ(t[5], 7.5);

  Tensor u({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(u.at(0, 1), 2.0);
  EXPECT_EQ(u.at(1, 0), 3.0);
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST(Tensor, FactoriesAndReductions) {
  Tensor f = Tensor::full({3}, 2.5);
  EXPECT_EQ(f.sum(), 7.5);
  Tensor s = Tensor::scalar(-4.0);
  EXPECT_EQ(s.size(), 1);
  EXPECT_EQ(s.min(), -4.0);
  Tensor m({2, 2}, {3, -1, 8, 0});
  EXPECT_EQ(m.min(), -1.0);
  EXPECT_EQ(m.max(), 8.0);
  EXPECT_TRUE(m.all_finite());
  m[0] = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(m.all_finite());
}

TEST(Tensor, ReshapeValidatesElementCount) {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.at(2, 1), 6.0);
  EXPECT_THROW(t.reshaped({4, 2}), std::invalid_argument);
}

TEST(Tensor, ShapeCheckNamesOperation) {
  Tensor a({2, 3});
  Tensor b({3, 2});
  try {
    check_same_shape(a, b, "add");
    FAIL() << "expected shape mismatch";
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos);
    EXPECT_NE(msg.find("(2,3)"), std::string::npos);
    EXPECT_NE(msg.find("(3,2)"), std::string::npos);
  }
}

TEST(Tensor, MaxAbsDiff) {
  Tensor a({3}, {1, 2, 3});
  Tensor b({3}, {1, 2.5, 2});
  EXPECT_DOUBLE_EQ(max_abs_diff(a, b), 1.0);
}

TEST(Rng, DeterministicAcrossInstances) {
  Rng a(1234), b(1234);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.uniform01(), b.uniform01());
  }
  Rng c(1235);
  bool any_diff = false;
  Rng a2(1234);
  for (int i = 0; i < 10; ++i) {
    any_diff |= a2.uniform01() != c.uniform01();
  }
  EXPECT_TRUE(any_diff);
}

TEST(Rng, UniformIntRangeInclusive) {
  Rng r(7);
  bool saw_lo = false, saw_hi = false;
  for (int i = 0; i < 2000; ++i) {
    int v = r.uniform_int(2, 5);
    EXPECT_GE(v, 2);
    EXPECT_LE(v, 5);
    saw_lo |= v == 2;
    saw_hi |= v == 5;
  }
  EXPECT_TRUE(saw_lo);
  EXPECT_TRUE(saw_hi);
}

TEST(Rng, NormalHasReasonableMoments) {
  Rng r(99);
  double sum = 0, sumsq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double v = r.normal(1.0, 2.0);
    sum += v;
    sumsq += v * v;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  EXPECT_NEAR(mean, 1.0, 0.05);
  EXPECT_NEAR(var, 4.0, 0.15);
}

TEST(Rng, StateRoundTrip) {
  Rng r(42);
  for (int i = 0; i < 17; ++i) r.uniform01();
  std::string s = r.state();
  std::vector<double> expect;
  for (int i = 0; i < 20; ++i) expect.push_back(r.uniform01());
  Rng r2(0);
  r2.set_state(s);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(r2.uniform01(), expect[i]);
}

TEST(Rng, DerivedSeedsDiffer) {
  uint64_t base = 1000;
  EXPECT_NE(derive_seed(base, 0), derive_seed(base, 1));
  EXPECT_NE(derive_seed(base, 0), derive_seed(base + 1, 0));
  EXPECT_EQ(derive_seed(base, 3), derive_seed(base, 3));
}

TEST(Rng, HashSensitiveToEveryByte) {
  Tensor a({4}, {1, 2, 3, 4});
  Tensor b = a;
  EXPECT_EQ(tensor_hash(a), tensor_hash(b));
  b[2] += 1e-15;
  EXPECT_NE(tensor_hash(a), tensor_hash(b));
}

TEST(Math, MatmulAgainstHandComputation) {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = matmul(a, b);
  EXPECT_DOUBLE_EQ(c.at(0, 0), 58.0);
  EXPECT_DOUBLE_EQ(c.at(0, 1), 64.0);
  EXPECT_DOUBLE_EQ(c.at(1, 0), 139.0);
  EXPECT_DOUBLE_EQ(c.at(1, 1), 154.0);
  EXPECT_THROW(matmul(a, a), std::invalid_argument);
}

TEST(Math, Transpose) {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor t = transpose(a);
  EXPECT_EQ(t.dim(0), 3);
  EXPECT_EQ(t.dim(1), 2);
  EXPECT_DOUBLE_EQ(t.at(2, 0), 3.0);
  EXPECT_DOUBLE_EQ(t.at(0, 1), 4.0);
}

TEST(Math, Im2colAndConvIdentityKernel) {
  // 3x3 identity kernel: convolution reproduces the input away from padding.
  Tensor x({1, 4, 4});
  Rng r(5);
  for (long long i = 0; i < x.size(); ++i) x[i] = r.uniform(-1, 1);
  Tensor w({1, 9});
  w[4] = 1.0;  // center tap
  Tensor b({1});
  Tensor y = conv2d_plain(x, w, b, 3, 3, 1, 1);
  EXPECT_TRUE(y.same_shape(x));
  EXPECT_LT(max_abs_diff(y, x), 1e-12);
}

TEST(Math, ConvMatchesDirectSum) {
  Rng r(11);
  Tensor x = random_uniform(r, {2, 5, 5}, -1, 1);
  Tensor w = random_uniform(r, {3, 2 * 9}, -1, 1);
  Tensor b = random_uniform(r, {3}, -1, 1);
  Tensor y = conv2d_plain(x, w, b, 3, 3, 1, 1);
  // Direct evaluation at a few positions.
  for (auto [oc, oy, ox] : {std::tuple{0, 0, 0}, {1, 2, 3}, {2, 4, 4}}) {
    double acc = b[oc];
    for (int ic = 0; ic < 2; ++ic) {
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          int iy = oy + ky - 1, ix = ox + kx - 1;
          if (iy < 0 || iy >= 5 || ix < 0 || ix >= 5) continue;
          acc += x.at(ic, iy, ix) * w.at(oc, ic * 9 + ky * 3 + kx);
        }
      }
    }
    EXPECT_NEAR(y.at(oc, oy, ox), acc, 1e-12);
  }
}

TEST(Math, ResizeBilinearPreservesConstant) {
  Tensor x = Tensor::full({2, 3, 5}, 0.7);
  Tensor y = resize_bilinear(x, 8, 8);
  EXPECT_EQ(y.dim(1), 8);
  EXPECT_EQ(y.dim(2), 8);
  for (long long i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], 0.7, 1e-12);
}

TEST(Math, ResizeBilinearIdentityAtSameSize) {
  Rng r(3);
  Tensor x = random_uniform(r, {1, 6, 7}, 0, 1);
  Tensor y = resize_bilinear(x, 6, 7);
  EXPECT_LT(max_abs_diff(x, y), 1e-12);
}

TEST(Math, GaussianBlurPreservesConstant) {
  Tensor x = Tensor::full({3, 9, 9}, 0.25);
  Tensor y = gaussian_blur(x, 1.3);
  for (long long i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], 0.25, 1e-12);
}

TEST(Math, L2Normalize) {
  Tensor v({3}, {3, 0, 4});
  Tensor n = l2_normalized(v);
  EXPECT_NEAR(n[0], 0.6, 1e-12);
  EXPECT_NEAR(n[2], 0.8, 1e-12);
  EXPECT_NEAR(l2_norm(n), 1.0, 1e-12);
}

TEST(Io, TensorRoundTrip) {
  namespace fs = std::filesystem;
  fs::path p = fs::temp_directory_path() / "vlcount_tensor_rt.ten";
  Rng r(21);
  Tensor t = random_normal(r, {3, 4, 5}, 0, 1);
  save_tensor(p.string(), t);
  Tensor u = load_tensor(p.string());
  EXPECT_TRUE(t.same_shape(u));
  EXPECT_EQ(max_abs_diff(t, u), 0.0);
  fs::remove(p);
}

TEST(Io, DensityRoundTrip) {
  namespace fs = std::filesystem;
  fs::path p = fs::temp_directory_path() / "vlcount_density_rt.den";
  Rng r(22);
  Tensor d = random_uniform(r, {6, 8}, 0, 2);
  save_density(p.string(), d);
  Tensor e = load_density(p.string());
  EXPECT_TRUE(d.same_shape(e));
  EXPECT_EQ(max_abs_diff(d, e), 0.0);
  fs::remove(p);
}

TEST(Io, PpmRoundTripQuantized) {
  namespace fs = std::filesystem;
  fs::path p = fs::temp_directory_path() / "vlcount_img_rt.ppm";
  Rng r(23);
  Tensor img = random_uniform(r, {3, 5, 7}, 0, 1);
  save_ppm(p.string(), img);
  Tensor back = load_ppm(p.string());
  EXPECT_TRUE(back.same_shape(img));
  // 8-bit quantization: error bounded by half a step.
  EXPECT_LE(max_abs_diff(back, img), 0.5 / 255.0 + 1e-12);
  fs::remove(p);
}

}  // namespace
}  // namespace vlcount
