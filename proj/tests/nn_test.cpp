#include <gtest/gtest.h>

#include "fd_check.hpp"
#include "vlcount/nn/adamw.hpp"
#include "vlcount/nn/attention.hpp"

namespace vlcount {
namespace {

TEST(ParameterStore, RejectsDuplicateNames) {
  ParameterStore store;
  store.add("w", Tensor({2}));
  EXPECT_THROW(store.add("w", Tensor({2})), std::invalid_argument);
}

TEST(ParameterStore, HashTracksValues) {
  ParameterStore store;
  Var w = store.add("w", Tensor({2}, {1, 2}));
  store.add("b", Tensor({1}, {3}));
  uint64_t h0 = store.value_hash();
  EXPECT_EQ(h0, store.value_hash());
  w.mutable_value()[0] += 1e-12;
  EXPECT_NE(h0, store.value_hash());
}

TEST(ParameterStore, SaveLoadRoundTrip) {
  Rng rng(5);
  ParameterStore a;
  a.add("x", random_normal(rng, {3, 2}));
  a.add("y", random_normal(rng, {4}));
  std::string blob;
  a.save(blob);

  ParameterStore b;
  b.add("x", Tensor({3, 2}));
  b.add("y", Tensor({4}));
  size_t pos = 0;
  b.load(blob, pos);
  EXPECT_EQ(pos, blob.size());
  EXPECT_EQ(a.value_hash(), b.value_hash());

  ParameterStore wrong;
  wrong.add("x", Tensor({2, 3}));
  wrong.add("y", Tensor({4}));
  pos = 0;
  EXPECT_THROW(wrong.load(blob, pos), std::runtime_error);
}

TEST(ParameterStore, ScalarCount) {
  ParameterStore store;
  store.add("a", Tensor({3, 4}));
  store.add("b", Tensor({5}));
  EXPECT_EQ(store.scalar_count(), 17);
}

TEST(Linear, MatchesManualAffine) {
  Rng rng(7);
  ParameterStore store;
  Linear lin(store, "lin", 3, 2, rng);
  Tensor x({2, 3}, {1, 0, -1, 0.5, 2, 1});
  Tensor y = lin(Var::constant(x)).value();
  const Tensor& w = lin.weight().value();
  const Tensor& b = lin.bias().value();
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      double acc = b[j];
      for (int k = 0; k < 3; ++k) acc += x.at(i, k) * w.at(k, j);
      EXPECT_NEAR(y.at(i, j), acc, 1e-12);
    }
  }
}

TEST(Linear, SeededInitIsReproducible) {
  ParameterStore s1, s2;
  Rng r1(11), r2(11);
  Linear a(s1, "l", 8, 8, r1);
  Linear b(s2, "l", 8, 8, r2);
  EXPECT_EQ(s1.value_hash(), s2.value_hash());
}

TEST(Mlp, ZeroAtInit) {
  Rng rng(9);
  ParameterStore store;
  Mlp mlp(store, "mlp", 6, 24, rng);
  Tensor x = random_normal(rng, {4, 6});
  Tensor y = mlp(Var::constant(x)).value();
  EXPECT_EQ(y.min(), 0.0);
  EXPECT_EQ(y.max(), 0.0);
}

TEST(Attention, OutputZeroAtInit) {
  Rng rng(13);
  ParameterStore store;
  MultiheadAttention attn(store, "attn", 8, 2, rng);
  Var q = Var::constant(random_normal(rng, {3, 8}));
  Var kv = Var::constant(random_normal(rng, {5, 8}));
  Tensor y = attn(q, kv, kv).value();
  EXPECT_EQ(y.min(), 0.0);
  EXPECT_EQ(y.max(), 0.0);
}

TEST(Attention, RejectsIndivisibleHeads) {
  Rng rng(14);
  ParameterStore store;
  EXPECT_THROW(MultiheadAttention(store, "a", 6, 4, rng), std::invalid_argument);
}

TEST(Attention, GradientsMatchFiniteDifferences) {
  Rng rng(15);
  ParameterStore store;
  MultiheadAttention attn(store, "attn", 4, 2, rng);
  // Perturb the zero-initialized output projection so gradients flow.
  Var wo = store.get("attn.out.weight");
  wo.mutable_value() = random_uniform(rng, {4, 4}, -0.3, 0.3);

  Var q = Var::param(random_uniform(rng, {2, 4}, -1, 1));
  Var kv = Var::param(random_uniform(rng, {3, 4}, -1, 1));
  std::vector<Var> checked = {q, kv, store.get("attn.q.weight"),
                              store.get("attn.v.bias"), wo};
  expect_gradients_match(
      [&] {
        Rng w(77);
        Tensor wt(attn(q, kv, kv).value().shape());
        for (long long i = 0; i < wt.size(); ++i) wt[i] = w.uniform(-1, 1);
        return sum_all(mul(attn(q, kv, kv), Var::constant(wt)));
      },
      checked, 1e-6, 1e-5);
}

TEST(CrossAttentionBlock, ExactIdentityAtInit) {
  Rng rng(17);
  ParameterStore store;
  CrossAttentionBlock block(store, "blk", 8, 2, rng);
  Tensor x = random_normal(rng, {4, 8});
  Tensor mem = random_normal(rng, {6, 8});
  Tensor y = block(Var::constant(x), Var::constant(mem)).value();
  EXPECT_EQ(max_abs_diff(x, y), 0.0);
}

TEST(TwoWayBlock, ExactIdentityAtInitBothStreams) {
  Rng rng(19);
  ParameterStore store;
  TwoWayBlock block(store, "tw", 8, 2, rng);
  Tensor tok = random_normal(rng, {3, 8});
  Tensor img = random_normal(rng, {10, 8});
  auto out = block(Var::constant(tok), Var::constant(img));
  EXPECT_EQ(max_abs_diff(out.tokens.value(), tok), 0.0);
  EXPECT_EQ(max_abs_diff(out.image.value(), img), 0.0);
}

TEST(TwoWayBlock, GradientsFlowAfterPerturbation) {
  Rng rng(21);
  ParameterStore store;
  TwoWayBlock block(store, "tw", 4, 2, rng);
  // Nudge the zero-initialized projections so the block is not the identity.
  for (const auto& [name, v] : store.entries()) {
    if (name.find(".out.weight") != std::string::npos ||
        name.find(".fc2.weight") != std::string::npos) {
      v.node()->value = random_uniform(rng, v.value().shape(), -0.2, 0.2);
    }
  }
  Var tok = Var::param(random_uniform(rng, {2, 4}, -1, 1));
  Var img = Var::param(random_uniform(rng, {3, 4}, -1, 1));
  std::vector<Var> checked = {tok, img, store.get("tw.t2i.attn.out.weight"),
                              store.get("tw.ffn.fc1.weight"),
                              store.get("tw.norm_self.gain")};
  expect_gradients_match(
      [&] {
        auto out = block(tok, img);
        Rng w(78);
        Tensor wt(out.image.value().shape());
        for (long long i = 0; i < wt.size(); ++i) wt[i] = w.uniform(-1, 1);
        auto out2 = block(tok, img);
        return add(sum_all(mul(out2.image, Var::constant(wt))), sum_all(out2.tokens));
      },
      checked, 1e-6, 2e-5);
}

TEST(ClipGlobalNorm, ReturnsPreClipNormAndRescales) {
  ParameterStore store;
  Var a = store.add("a", Tensor({2}, {0, 0}));
  Var b = store.add("b", Tensor({1}, {0}));
  a.node()->grad = Tensor({2}, {3, 0});
  b.node()->grad = Tensor({1}, {4});
  double norm = clip_global_norm(store, 1.0);
  EXPECT_DOUBLE_EQ(norm, 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(b.grad()[0], 0.8, 1e-12);
  // Below the threshold gradients are untouched.
  a.node()->grad = Tensor({2}, {0.1, 0});
  b.node()->grad = Tensor({1}, {0});
  EXPECT_NEAR(clip_global_norm(store, 1.0), 0.1, 1e-12);
  EXPECT_DOUBLE_EQ(a.grad()[0], 0.1);
}

TEST(AdamW, FirstStepMovesAgainstGradientSign) {
  ParameterStore store;
  Var p = store.add("p", Tensor({2}, {1.0, -1.0}));
  p.node()->grad = Tensor({2}, {0.5, -0.5});
  AdamW opt({.lr = 0.1, .weight_decay = 0.0});
  opt.step(store);
  // With bias correction the first step is ~lr * sign(g).
  EXPECT_NEAR(p.value()[0], 1.0 - 0.1, 1e-6);
  EXPECT_NEAR(p.value()[1], -1.0 + 0.1, 1e-6);
}

TEST(AdamW, DecoupledWeightDecayShrinksWithZeroGradient) {
  ParameterStore store;
  Var p = store.add("p", Tensor({1}, {2.0}));
  p.node()->grad = Tensor({1}, {0.0});
  AdamW opt({.lr = 0.5, .weight_decay = 0.1});
  opt.step(store);
  EXPECT_NEAR(p.value()[0], 2.0 - 0.5 * 0.1 * 2.0, 1e-12);
}

TEST(AdamW, ConvergesOnQuadratic) {
  ParameterStore store;
  Var p = store.add("p", Tensor({1}, {4.0}));
  AdamW opt({.lr = 0.05, .weight_decay = 0.0});
  for (int i = 0; i < 400; ++i) {
    store.zero_grad();
    Var loss = squared_distance(p, Var::constant(Tensor({1}, {1.5})));
    loss.backward();
    opt.step(store);
  }
  EXPECT_NEAR(p.value()[0], 1.5, 1e-2);
}

TEST(AdamW, StateRoundTripContinuesIdentically) {
  auto run_steps = [](ParameterStore& store, AdamW& opt, Var p, int n) {
    for (int i = 0; i < n; ++i) {
      store.zero_grad();
      Var loss = squared_distance(p, Var::constant(Tensor({1}, {0.0})));
      loss.backward();
      opt.step(store);
    }
  };
  ParameterStore s1;
  Var p1 = s1.add("p", Tensor({1}, {3.0}));
  AdamW o1({.lr = 0.1});
  run_steps(s1, o1, p1, 5);
  std::string blob;
  o1.save(blob);
  std::string pblob;
  s1.save(pblob);
  run_steps(s1, o1, p1, 7);

  ParameterStore s2;
  Var p2 = s2.add("p", Tensor({1}, {0.0}));
  size_t pos = 0;
  s2.load(pblob, pos);
  AdamW o2({.lr = 0.1});
  pos = 0;
  o2.load(blob, pos);
  run_steps(s2, o2, p2, 7);
  EXPECT_DOUBLE_EQ(p1.value()[0], p2.value()[0]);
}

}  // namespace
}  // namespace vlcount
