#pragma once

#include "vlcount/eval/evaluate.hpp"
#include "vlcount/train/trainer.hpp"

namespace vlcount {

/// The four splits of the synthetic two-domain benchmark.
struct BenchmarkData {
  std::vector<Sample> train, val, test_a, test_b;
};

inline BenchmarkData load_benchmark(const std::string& manifest_path) {
  BenchmarkData d;
  d.train = load_split(manifest_path, "train").samples;
  d.val = load_split(manifest_path, "val").samples;
  d.test_a = load_split(manifest_path, "test_a").samples;
  d.test_b = load_split(manifest_path, "test_b").samples;
  return d;
}

/// One training run's headline numbers: in-domain and cross-domain MAE.
struct RunMetrics {
  double mae_a = 0;
  double mae_b = 0;
};

/// Executes one configured run; throwing marks the cell failed.
using AblationRunner = std::function<RunMetrics(const ModelConfig&, const TrainConfig&)>;

struct AblationCell {
  uint64_t seed = 0;
  RunMetrics metrics;
  bool failed = false;
  std::string error;
};

struct AblationRow {
  std::string label;
  std::vector<AblationCell> cells;
  double mean_a = 0, sd_a = 0, mean_b = 0, sd_b = 0;
  int n_ok = 0;

  void aggregate() {
    std::vector<double> a, b;
    for (const AblationCell& c : cells) {
      if (c.failed) continue;
      a.push_back(c.metrics.mae_a);
      b.push_back(c.metrics.mae_b);
    }
    n_ok = static_cast<int>(a.size());
    auto mean_sd = [](const std::vector<double>& v) -> std::pair<double, double> {
      if (v.empty()) return {0, 0};
      double m = 0;
      for (double x : v) m += x;
      m /= static_cast<double>(v.size());
      if (v.size() < 2) return {m, 0};
      double ss = 0;
      for (double x : v) ss += (x - m) * (x - m);
      return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
    };
    std::tie(mean_a, sd_a) = mean_sd(a);
    std::tie(mean_b, sd_b) = mean_sd(b);
  }
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::vector<uint64_t> seeds;

  const AblationRow* find(const std::string& label) const {
    for (const AblationRow& r : rows) {
      if (r.label == label) return &r;
    }
    return nullptr;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["seeds"] = seeds;
    j["rows"] = nlohmann::ordered_json::array();
    for (const AblationRow& r : rows) {
      nlohmann::ordered_json cells = nlohmann::ordered_json::array();
      for (const AblationCell& c : r.cells) {
        nlohmann::ordered_json cj{{"seed", c.seed}, {"failed", c.failed}};
        if (c.failed) {
          cj["error"] = c.error;
        } else {
          cj["mae_a"] = c.metrics.mae_a;
          cj["mae_b"] = c.metrics.mae_b;
        }
        cells.push_back(std::move(cj));
      }
      j["rows"].push_back({{"label", r.label},
                           {"mae_a_mean", r.mean_a},
                           {"mae_a_sd", r.sd_a},
                           {"mae_b_mean", r.mean_b},
                           {"mae_b_sd", r.sd_b},
                           {"runs_ok", r.n_ok},
                           {"cells", std::move(cells)}});
    }
    return j;
  }

  /// Seed means are always printed with their sample standard deviation.
  std::string to_table() const {
    std::ostringstream os;
    os << std::left << std::setw(26) << "variant" << std::right << std::setw(17)
       << "A-test MAE" << std::setw(17) << "B-test MAE" << std::setw(7) << "runs" << "\n";
    os << std::string(67, '-') << "\n";
    for (const AblationRow& r : rows) {
      os << std::left << std::setw(26) << r.label;
      if (r.n_ok == 0) {
        os << std::right << std::setw(17) << "failed" << std::setw(17) << "failed";
      } else {
        auto cell = [](double m, double s) {
          std::ostringstream c;
          c << std::fixed << std::setprecision(3) << m << "±" << s;
          return c.str();
        };
        // setw counts bytes; the UTF-8 "±" is two bytes, so pad by hand.
        std::string ca = cell(r.mean_a, r.sd_a), cb = cell(r.mean_b, r.sd_b);
        auto pad = [](const std::string& s, size_t width) {
          size_t glyphs = s.size() - 1;  // "±" is 2 bytes but 1 column
          return std::string(width > glyphs ? width - glyphs : 0, ' ') + s;
        };
        os << pad(ca, 17) << pad(cb, 17);
      }
      os << std::right << std::setw(7) << r.n_ok << "\n";
    }
    return os.str();
  }
};

struct AblationConfig {
  ModelConfig model;
  TrainConfig train;                                       // per-row fields overridden below
  std::vector<double> alphas = {0, 0.25, 0.5, 0.75, 0.9, 1.0};
  std::vector<VisionVariant> vision_variants = {
      VisionVariant::kClsToken, VisionVariant::kGlobalPool, VisionVariant::kMaskPool};
  std::vector<uint64_t> seeds = {1, 2, 3};
  bool include_baseline = true;
  bool include_alphas = true;
  bool include_vision = true;
};

inline std::string alpha_label(double alpha) {
  std::ostringstream os;
  os << "alpha=" << std::fixed << std::setprecision(2) << alpha;
  // The endpoints keep only one distillation term.
  if (alpha == 0.0) os << " (L-KD only)";
  if (alpha == 1.0) os << " (V-KD only)";
  return os.str();
}

/// Runs the whole grid. A throwing runner marks that cell failed and the
/// suite moves on; a row with zero surviving cells shows as failed.
inline AblationReport run_ablation(const AblationConfig& cfg, const AblationRunner& run,
                                   std::ostream* progress = nullptr) {
  AblationReport report;
  report.seeds = cfg.seeds;

  auto run_row = [&](const std::string& label, auto&& mutate) {
    AblationRow row;
    row.label = label;
    for (uint64_t seed : cfg.seeds) {
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      mutate(tc);
      AblationCell cell;
      cell.seed = seed;
      if (progress) *progress << "[ablate] " << label << " seed " << seed << "\n";
      try {
        cell.metrics = run(cfg.model, tc);
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
        if (progress) *progress << "[ablate]   failed: " << e.what() << "\n";
      }
      row.cells.push_back(std::move(cell));
    }
    row.aggregate();
    report.rows.push_back(std::move(row));
  };

  if (cfg.include_baseline) {
    run_row("baseline (no KD)", [](TrainConfig& tc) { tc.use_kd = false; });
  }
  if (cfg.include_alphas) {
    for (double a : cfg.alphas) {
      run_row(alpha_label(a), [a](TrainConfig& tc) {
        tc.use_kd = true;
        tc.alpha = a;
      });
    }
  }
  if (cfg.include_vision) {
    for (VisionVariant v : cfg.vision_variants) {
      run_row("vision=" + to_string(v), [v](TrainConfig& tc) {
        tc.use_kd = true;
        tc.vision_variant = v;
      });
    }
  }
  return report;
}

/// The production runner: train on the benchmark, evaluate both test splits
/// with the best-on-validation parameters (final parameters when
/// checkpointing is off).
inline AblationRunner make_training_runner(const BenchmarkData& data,
                                           std::shared_ptr<TeacherHandle> teacher,
                                           std::shared_ptr<PromptBank> prompts) {
  return [&data, teacher, prompts](const ModelConfig& mc,
                                   const TrainConfig& tc) -> RunMetrics {
    Trainer trainer(mc, tc, teacher, prompts);
    TrainResult tr = trainer.train(data.train, data.val);
    if (!tr.best_checkpoint_path.empty()) {
      trainer.restore(Checkpoint::load(tr.best_checkpoint_path));
    }
    DensityPredictor predict = model_predictor(trainer.model(), tc.mode);
    RunMetrics m;
    m.mae_a = evaluate_split(data.test_a, predict, "test_a", tc.mode).mae;
    m.mae_b = evaluate_split(data.test_b, predict, "test_b", tc.mode).mae;
    return m;
  };
}

struct ThresholdFailure {
  std::string what;
};

/// CI hook: cross-domain distillation must beat the no-KD baseline by at
/// least 10%, and the default weighting must not trail either endpoint by
/// more than one pooled standard deviation.
inline std::vector<ThresholdFailure> check_thresholds(const AblationReport& report) {
  std::vector<ThresholdFailure> failures;
  const AblationRow* base = report.find("baseline (no KD)");
  const AblationRow* full = report.find(alpha_label(0.9));
  const AblationRow* a0 = report.find(alpha_label(0.0));
  const AblationRow* a1 = report.find(alpha_label(1.0));
  if (base && full && base->n_ok > 0 && full->n_ok > 0) {
    if (!(full->mean_b <= 0.9 * base->mean_b)) {
      std::ostringstream os;
      os << "cross-domain MAE " << full->mean_b << " not >=10% below baseline "
         << base->mean_b;
      failures.push_back({os.str()});
    }
  } else {
    failures.push_back({"baseline or alpha=0.90 row missing/failed"});
  }
  if (full && full->n_ok > 0) {
    for (const AblationRow* end : {a0, a1}) {
      if (!end || end->n_ok == 0) {
        failures.push_back({"alpha endpoint row missing/failed"});
        continue;
      }
      double margin = std::sqrt(0.5 * (full->sd_b * full->sd_b + end->sd_b * end->sd_b));
      if (full->mean_b > end->mean_b + margin) {
        std::ostringstream os;
        os << "alpha=0.90 MAE " << full->mean_b << " trails " << end->label << " ("
           << end->mean_b << ") by more than one pooled sd (" << margin << ")";
        failures.push_back({os.str()});
      }
    }
  }
  return failures;
}

}  // namespace vlcount
