#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "vlcount/data/density.hpp"
#include "vlcount/eval/ablation.hpp"

// Release gate: every criterion below prints one PASS/FAIL line so the
// whole checklist is readable from a single run of this binary.

namespace vlcount {
namespace {

namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

void report(int criterion, bool ok, const std::string& what) {
  std::cout << (ok ? "[acceptance PASS]" : "[acceptance FAIL]") << " criterion "
            << criterion << ": " << what << "\n";
  EXPECT_TRUE(ok) << "criterion " << criterion << ": " << what;
}

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

std::shared_ptr<PromptBank> fixture_bank(const std::vector<std::string>& cats) {
  auto cache = std::make_shared<PromptCache>();
  auto bank = std::make_shared<PromptBank>(PromptBank::with_defaults(cache));
  bank->populate_fixtures(cats);
  return bank;
}

std::vector<Sample> small_batch(int n, uint64_t seed) {
  SyntheticConfig cfg;
  std::vector<std::string> cats = {"red circle", "blue square"};
  std::vector<std::string> clutter = {"green triangle", "yellow cross"};
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    out.push_back(make_sample(cfg, cats[i % cats.size()], "A", clutter, rng));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared desk-scale benchmark grid (used by criteria 6, 7, 9 and 10).
// ---------------------------------------------------------------------------

struct Grid {
  fs::path dir;
  std::string manifest;
  SyntheticConfig synth;
  BenchmarkData data;
  std::shared_ptr<TeacherHandle> teacher;
  std::shared_ptr<PromptBank> bank;
  ModelConfig model;
  TrainConfig train;
  AblationReport rpt;
  double build_seconds = 0;
};

const Grid& grid() {
  static Grid g = [] {
    Grid r;
    auto t0 = clock_type::now();
    r.dir = fs::temp_directory_path() / "vlcount_acceptance";
    fs::remove_all(r.dir);

    r.synth.n_train = 200;
    r.synth.n_val = 16;
    r.synth.n_test = 100;  // per test split
    r.manifest = generate_synthetic(r.synth, r.dir.string(), /*seed=*/11);
    r.data = load_benchmark(r.manifest);

    std::vector<std::string> cats;
    for (const auto* split : {&r.data.train, &r.data.val, &r.data.test_a, &r.data.test_b}) {
      for (const Sample& s : *split) cats.push_back(s.category);
    }
    std::sort(cats.begin(), cats.end());
    cats.erase(std::unique(cats.begin(), cats.end()), cats.end());

    r.model = ModelConfig::toy();
    r.teacher = std::make_shared<ToyTeacher>(1, r.model.d_t);
    r.bank = fixture_bank(cats);

    r.train.epochs = 8;
    r.train.batch_size = 4;
    // Checkpointing stays off so every grid cell is evaluated at its
    // final-epoch parameters, the same protocol the ablate command uses.
    r.train.checkpoint_dir.clear();

    AblationConfig acfg;
    acfg.model = r.model;
    acfg.train = r.train;
    acfg.alphas = {0.0, 0.9, 1.0};
    acfg.seeds = {1, 2, 3};
    acfg.include_vision = false;
    r.rpt = run_ablation(acfg, make_training_runner(r.data, r.teacher, r.bank),
                         &std::cerr);
    r.build_seconds = seconds_since(t0);
    return r;
  }();
  return g;
}

double pooled_sd(const AblationRow& a, const AblationRow& b) {
  return std::sqrt(0.5 * (a.sd_b * a.sd_b + b.sd_b * b.sd_b));
}

// ---------------------------------------------------------------------------
// 1. Loss and metric hand examples.
// ---------------------------------------------------------------------------

TEST(Acceptance, C01LossAndMetricOracles) {
  const double tol = 1e-9;
  std::string detail;

  Tensor gt({2, 2});
  gt.at(0, 0) = 1.0;
  gt.at(1, 1) = 1.0;
  Var zeros = Var::constant(Tensor({2, 2}));
  double dl = density_loss({zeros}, {gt}, {2.0}).value()[0];
  bool ok = std::abs(dl - 0.5) <= tol;
  if (!ok) detail += " density=" + fmt(dl, 12);

  Tensor target({2});
  target[0] = 3.0;
  target[1] = 4.0;
  double kd = kd_loss({Var::constant(Tensor({2}))}, {target}).value()[0];
  if (std::abs(kd - 5.0) > tol) {
    ok = false;
    detail += " kd=" + fmt(kd, 12);
  }

  auto c = [](double v) { return Var::constant(Tensor::full({1}, v)); };
  double total = combine_losses(c(0.5), c(5.0), c(2.0), 0.9).total_value();
  if (std::abs(total - 5.2) > tol) {
    ok = false;
    detail += " total=" + fmt(total, 12);
  }

  auto [mae1, rmse1] = mae_rmse({2, 4}, {3, 3});
  if (std::abs(mae1 - 1.0) > tol || std::abs(rmse1 - 1.0) > tol) {
    ok = false;
    detail += " mae_rmse([2,4],[3,3])=(" + fmt(mae1, 12) + "," + fmt(rmse1, 12) + ")";
  }
  auto [mae2, rmse2] = mae_rmse({0, 0}, {3, 0});
  if (std::abs(mae2 - 1.5) > tol || std::abs(rmse2 - 3.0 / std::sqrt(2.0)) > tol) {
    ok = false;
    detail += " mae_rmse([0,0],[3,0])=(" + fmt(mae2, 12) + "," + fmt(rmse2, 12) + ")";
  }

  report(1, ok, "loss and metric hand examples reproduced within 1e-9" + detail);
}

// ---------------------------------------------------------------------------
// 2. Masked pooling against a brute-force oracle.
// ---------------------------------------------------------------------------

Tensor brute_force_mask_pool(const Tensor& feats, const Tensor& mask, double thr) {
  const int ht = feats.dim(0), wt = feats.dim(1), dt = feats.dim(2);
  auto average = [&](bool use_threshold) {
    Tensor acc({dt});
    double total = 0;
    for (int y = 0; y < ht; ++y) {
      for (int x = 0; x < wt; ++x) {
        double w = mask.at(y, x);
        if (use_threshold && w < thr) continue;
        for (int ch = 0; ch < dt; ++ch) acc[ch] += w * feats.at(y, x, ch);
        total += w;
      }
    }
    return std::pair<Tensor, double>(acc, total);
  };
  auto [acc, total] = average(true);
  if (total <= 0) std::tie(acc, total) = average(false);
  if (total <= 0) {
    Tensor mean({dt});
    for (int y = 0; y < ht; ++y) {
      for (int x = 0; x < wt; ++x) {
        for (int ch = 0; ch < dt; ++ch) mean[ch] += feats.at(y, x, ch);
      }
    }
    mean.scale_(1.0 / (ht * wt));
    return mean;
  }
  acc.scale_(1.0 / total);
  return acc;
}

TEST(Acceptance, C02MaskPoolOracle) {
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    Rng rng(derive_seed(500, t));
    int ht = 2 + t % 5, wt = 2 + (t / 5) % 5, dt = 1 + t % 7;
    Tensor feats = random_uniform(rng, {ht, wt, dt}, -1.0, 1.0);
    Tensor mask = random_uniform(rng, {ht, wt}, 0.0, 1.0);
    if (t % 10 == 7) mask.scale_(0.4);  // nothing passes the threshold
    if (t == 50) mask = Tensor({ht, wt});  // all-zero mask
    Tensor got = mask_pool(feats, mask, 0.5);
    Tensor want = brute_force_mask_pool(feats, mask, 0.5);
    for (int ch = 0; ch < dt; ++ch) {
      worst = std::max(worst, std::abs(got[ch] - want[ch]));
    }
  }
  report(2, worst <= 1e-6,
         "mask pooling matches brute force on 100 seeded instances (max diff " +
             fmt(worst, 9) + ")");
}

// ---------------------------------------------------------------------------
// 3. Analytic gradients of the total loss vs central finite differences.
// ---------------------------------------------------------------------------

TEST(Acceptance, C03TotalLossGradientCheck) {
  auto t0 = clock_type::now();
  ModelConfig mc = ModelConfig::toy();  // grid 8, d 16, d_t 32
  CountingModel model(mc, 5);

  // Wake the identity-initialized residual outputs and the zero-initialized
  // final layer so every parameter carries gradient.
  Rng noise(13);
  for (const auto& [name, v] : model.parameters().entries()) {
    bool residual_out = name.ends_with(".out.weight") || name.ends_with(".fc2.weight");
    if (residual_out || name == "head.final.weight") {
      Var handle = v;
      handle.mutable_value() = random_normal(noise, v.value().shape(), 0.0, 0.05);
    }
  }

  auto teacher = std::make_shared<ToyTeacher>(1, mc.d_t);
  auto bank = fixture_bank({"red circle", "blue square"});
  std::vector<Sample> batch = small_batch(2, 90);

  std::vector<Tensor> gts, targets_v, targets_l;
  std::vector<double> counts;
  for (const Sample& s : batch) {
    gts.push_back(render_density(s.points, mc.image_size, mc.image_size, 1.0));
    counts.push_back(static_cast<double>(s.count()));
    PromptSet set = bank->build(s.category);
    Tensor r_l = text_representation(set.prompts, *teacher);
    Tensor feats = teacher->dense_features(s.image);
    Tensor mask = normalize_minmax(cosine_map(feats, r_l));
    targets_v.push_back(mask_pool(feats, mask, 0.5));
    targets_l.push_back(r_l);
  }

  auto loss = [&]() {
    std::vector<Var> densities, kd_v, kd_l;
    for (const Sample& s : batch) {
      ForwardResult fwd = model.forward(s.image, s.boxes, CountingMode::kFewShot);
      densities.push_back(fwd.density);
      kd_v.push_back(fwd.kd_v);
      kd_l.push_back(fwd.kd_l);
    }
    return combine_losses(density_loss(densities, gts, counts),
                          kd_loss(kd_v, targets_v), kd_loss(kd_l, targets_l), 0.9)
        .total;
  };

  Var base = loss();
  model.parameters().zero_grad();
  base.backward();

  const auto& entries = model.parameters().entries();
  Rng pick(774);
  int checked = 0, failed = 0;
  double worst = 0;
  while (checked < 50) {
    const auto& [name, v] = entries[static_cast<size_t>(
        pick.uniform_int(0, static_cast<int>(entries.size()) - 1))];
    long long idx = pick.uniform_int(0, static_cast<int>(v.value().size()) - 1);
    double analytic = v.grad().size() ? v.grad()[idx] : 0.0;
    Var handle = v;
    double orig = handle.mutable_value()[idx];
    double h = 1e-6;
    handle.mutable_value()[idx] = orig + h;
    double up = loss().value()[0];
    handle.mutable_value()[idx] = orig - h;
    double down = loss().value()[0];
    handle.mutable_value()[idx] = orig;
    double fd = (up - down) / (2.0 * h);
    double rel = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-2});
    worst = std::max(worst, rel);
    if (rel >= 1e-4) {
      ++failed;
      ADD_FAILURE() << name << "[" << idx << "]: analytic " << analytic << " vs fd " << fd;
    }
    ++checked;
  }
  double secs = seconds_since(t0);
  report(3, failed == 0 && secs < 120.0,
         "50 random parameter gradients match finite differences (worst rel err " +
             fmt(worst, 8) + ", " + fmt(secs, 1) + "s)");
}

// ---------------------------------------------------------------------------
// 4. Identity at initialization.
// ---------------------------------------------------------------------------

TEST(Acceptance, C04IdentityAtInit) {
  ModelConfig mc = ModelConfig::toy();
  CountingModel model(mc, 9);
  Rng rng(41);
  Tensor img = random_uniform(rng, {3, mc.image_size, mc.image_size}, 0.0, 1.0);
  std::vector<Box> boxes = {{4, 4, 14, 12}, {20, 30, 29, 40}};

  ForwardResult fwd = model.forward(img, boxes, CountingMode::kFewShot);
  Var feature = model.extract_feature(img);
  Var tokens = model.encoder().exemplar_tokens(feature, boxes);
  Var encoded = model.encoder().encode(feature, tokens);
  Var direct = model.regress(encoded);

  double diff = 0;
  for (long long i = 0; i < direct.value().size(); ++i) {
    diff = std::max(diff, std::abs(direct.value()[i] - fwd.density.value()[i]));
  }
  report(4, diff <= 1e-5,
         "untrained forward equals the regression head on the encoded feature "
         "(max diff " + fmt(diff, 9) + ")");
}

// ---------------------------------------------------------------------------
// 5. Frozen teacher and backbone; no teacher calls at evaluation.
// ---------------------------------------------------------------------------

TEST(Acceptance, C05FrozenModulesAndTeacherIsolation) {
  auto t0 = clock_type::now();
  ModelConfig mc = ModelConfig::toy();
  auto counting = std::make_shared<CallCountingTeacher>(
      std::make_shared<ToyTeacher>(1, mc.d_t));
  auto bank = fixture_bank({"red circle", "blue square"});
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 2;
  tc.seed = 3;
  Trainer trainer(mc, tc, counting, bank);
  std::vector<Sample> data = small_batch(4, 60);

  uint64_t backbone_before = trainer.model().backbone().weight_hash();
  uint64_t teacher_before = counting->weight_hash();
  for (int step = 0; step < 20; ++step) {
    trainer.train_step({data[(2 * step) % 4], data[(2 * step + 1) % 4]});
  }
  bool frozen = trainer.model().backbone().weight_hash() == backbone_before &&
                counting->weight_hash() == teacher_before;

  counting->reset();
  double val_mae = trainer.validate_mae(data);
  EvalRow row = evaluate_split(data, model_predictor(trainer.model(), tc.mode),
                               "probe", tc.mode);
  bool isolated = counting->total_calls() == 0;
  double secs = seconds_since(t0);
  report(5,
         frozen && isolated && std::isfinite(val_mae) && std::isfinite(row.mae) &&
             secs < 120.0,
         "after 20 steps backbone/teacher hashes unchanged and evaluation made " +
             std::to_string(counting->total_calls()) + " teacher calls (" +
             fmt(secs, 1) + "s)");
}

// ---------------------------------------------------------------------------
// 6. Distillation improves cross-domain MAE by at least 10%.
// ---------------------------------------------------------------------------

TEST(Acceptance, C06CrossDomainGain) {
  const Grid& g = grid();
  const AblationRow* base = g.rpt.find("baseline (no KD)");
  const AblationRow* full = g.rpt.find(alpha_label(0.9));
  bool rows_ok = base && full && base->n_ok >= 3 && full->n_ok >= 3;
  bool gain_ok = rows_ok && full->mean_b <= 0.9 * base->mean_b;
  bool time_ok = g.build_seconds < 1800.0;
  std::string what = "cross-domain MAE";
  if (rows_ok) {
    double cut = 100.0 * (1.0 - full->mean_b / base->mean_b);
    what += " " + fmt(full->mean_b) + " (distilled) vs " + fmt(base->mean_b) +
            " (baseline), " + fmt(cut, 1) + "% lower (need >=10%), grid " +
            fmt(g.build_seconds, 0) + "s";
  } else {
    what += ": grid rows missing or failed";
  }
  report(6, rows_ok && gain_ok && time_ok, what);
}

// ---------------------------------------------------------------------------
// 7. Mixed weighting does not trail either single-branch endpoint.
// ---------------------------------------------------------------------------

TEST(Acceptance, C07AlphaEndpointPattern) {
  const Grid& g = grid();
  const AblationRow* full = g.rpt.find(alpha_label(0.9));
  const AblationRow* a0 = g.rpt.find(alpha_label(0.0));
  const AblationRow* a1 = g.rpt.find(alpha_label(1.0));
  bool rows_ok = full && a0 && a1 && full->n_ok >= 3 && a0->n_ok >= 3 && a1->n_ok >= 3;
  bool ok = rows_ok;
  std::string what;
  if (rows_ok) {
    double m0 = pooled_sd(*full, *a0), m1 = pooled_sd(*full, *a1);
    ok = full->mean_b <= a0->mean_b + m0 && full->mean_b <= a1->mean_b + m1;
    what = "alpha=0.9 MAE " + fmt(full->mean_b) + " vs endpoints " + fmt(a0->mean_b) +
           " (language-only, pooled sd " + fmt(m0) + ") and " + fmt(a1->mean_b) +
           " (vision-only, pooled sd " + fmt(m1) + ")";
  } else {
    what = "alpha rows missing or failed";
  }
  report(7, ok, what);
}

// ---------------------------------------------------------------------------
// 8. Zero-shot training and evaluation.
// ---------------------------------------------------------------------------

TEST(Acceptance, C08ZeroShotPath) {
  auto t0 = clock_type::now();
  const Grid& g = grid();
  TrainConfig tc = g.train;
  tc.mode = CountingMode::kZeroShot;
  tc.epochs = 2;
  tc.seed = 4;
  tc.checkpoint_dir.clear();
  Trainer trainer(g.model, tc, g.teacher, g.bank);
  TrainResult res = trainer.train(g.data.train, g.data.val);
  EvalRow row = evaluate_split(g.data.test_a, model_predictor(trainer.model(), tc.mode),
                               "test_a", tc.mode);

  bool finite = std::isfinite(res.best_val_mae) && std::isfinite(row.mae) &&
                std::isfinite(row.rmse);
  bool count_is_sum = true;
  for (int i = 0; i < 5; ++i) {
    ForwardResult fwd =
        trainer.model().forward(g.data.test_a[i].image, {}, CountingMode::kZeroShot);
    double manual = 0;
    for (long long j = 0; j < fwd.density.value().size(); ++j) {
      manual += fwd.density.value()[j];
    }
    if (std::abs(fwd.count() - manual) > 1e-9 * std::max(1.0, manual)) {
      count_is_sum = false;
    }
  }
  double secs = seconds_since(t0);
  report(8,
         finite && count_is_sum && secs < 600.0,
         "zero-shot training and evaluation finish with finite MAE " + fmt(row.mae) +
             " and count == density sum (" + fmt(secs, 1) + "s)");
}

// ---------------------------------------------------------------------------
// 9. Rerunning one grid cell reproduces its numbers.
// ---------------------------------------------------------------------------

TEST(Acceptance, C09CellReproducibility) {
  const Grid& g = grid();
  AblationRunner runner = make_training_runner(g.data, g.teacher, g.bank);
  TrainConfig tc = g.train;
  tc.seed = 1;
  tc.use_kd = false;
  RunMetrics first = runner(g.model, tc);
  RunMetrics second = runner(g.model, tc);
  double diff = std::max(std::abs(first.mae_a - second.mae_a),
                         std::abs(first.mae_b - second.mae_b));
  report(9, diff <= 1e-6,
         "identical reruns of the cheapest grid cell agree (max MAE diff " +
             fmt(diff, 9) + ")");
}

// ---------------------------------------------------------------------------
// 10. Density-target mass conservation and split category disjointness.
// ---------------------------------------------------------------------------

TEST(Acceptance, C10BenchmarkIntegrity) {
  const Grid& g = grid();
  double worst = 0;
  int checked = 0;
  for (const auto* split : {&g.data.train, &g.data.val, &g.data.test_a, &g.data.test_b}) {
    for (const Sample& s : *split) {
      Tensor gt = render_density(s.points, s.height(), s.width(), g.synth.density_sigma);
      double err = std::abs(gt.sum() - s.count()) / std::max(1.0, double(s.count()));
      worst = std::max(worst, err);
      ++checked;
    }
  }
  bool mass_ok = worst <= 1e-3;

  std::ifstream in(g.manifest);
  nlohmann::json manifest;
  in >> manifest;
  std::vector<std::string> train_cats = manifest.at("categories_train");
  std::vector<std::string> test_cats = manifest.at("categories_test");
  bool disjoint = true;
  for (const std::string& c : train_cats) {
    if (std::find(test_cats.begin(), test_cats.end(), c) != test_cats.end()) {
      disjoint = false;
    }
  }
  auto in_list = [](const std::vector<std::string>& list, const std::string& c) {
    return std::find(list.begin(), list.end(), c) != list.end();
  };
  for (const Sample& s : g.data.train) disjoint = disjoint && in_list(train_cats, s.category);
  for (const Sample& s : g.data.test_a) disjoint = disjoint && in_list(test_cats, s.category);
  for (const Sample& s : g.data.test_b) disjoint = disjoint && in_list(test_cats, s.category);

  report(10, mass_ok && disjoint,
         "all " + std::to_string(checked) + " density targets conserve mass (worst rel err " +
             fmt(worst, 7) + ") and train/test categories are disjoint");
}

}  // namespace
}  // namespace vlcount
