#pragma once

#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "vlcount/eval/ablation.hpp"

namespace vlcount {
namespace cli {

namespace fs = std::filesystem;

/// Fully resolved settings for one command: built-in defaults, overlaid by
/// the config file, overlaid by command-line flags, in that order.
struct Effective {
  ModelConfig model = ModelConfig::toy();
  TrainConfig train;
  SyntheticConfig synth;

  std::string data;            // manifest.json or a directory holding one
  std::string out;
  std::string checkpoint;
  std::string split = "test_b";

  std::string teacher_kind = "toy";
  uint64_t teacher_seed = 1;
  std::string teacher_export;  // precomputed-feature file for teacher=real

  std::string prompt_cache;    // empty = resolve from env / data directory
  bool name_free = false;
  std::vector<std::string> templates;    // empty = built-in set
  std::vector<std::string> llm_queries;  // empty = built-in set

  std::vector<uint64_t> ablate_seeds = {1, 2, 3};
  std::vector<double> ablate_alphas = {0.0, 0.9, 1.0};
  bool ablate_vision = false;
  bool check_thresholds_flag = false;
};

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config key '" + key + "': expected a boolean, got '" + v +
                              "'");
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected an integer, got '" +
                                v + "'");
  }
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected a number, got '" + v +
                                "'");
  }
}

inline std::vector<std::string> split_csv(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(v);
  while (std::getline(is, item, ',')) {
    size_t a = item.find_first_not_of(" \t");
    size_t b = item.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

/// Accepts test_a/test_b/train/val plus the spoken aliases "A-test"/"B-test"
/// (any case, '-' or '_').
inline std::string parse_split_name(std::string s) {
  for (char& c : s) c = (c == '-') ? '_' : static_cast<char>(std::tolower(c));
  if (s == "a_test" || s == "test_a") return "test_a";
  if (s == "b_test" || s == "test_b") return "test_b";
  if (s == "train" || s == "val") return s;
  throw std::invalid_argument("unknown split '" + s +
                              "' (expected train, val, test_a/A-test, test_b/B-test)");
}

inline ExemplarCombine parse_combine(const std::string& v) {
  if (v == "sum") return ExemplarCombine::kSum;
  if (v == "concat") return ExemplarCombine::kConcat;
  throw std::invalid_argument("combine must be 'sum' or 'concat', got '" + v + "'");
}

inline void apply_key(Effective& eff, const std::string& key, const std::string& value) {
  // model
  if (key == "image_size") {
    eff.model.image_size = static_cast<int>(parse_int(key, value));
    eff.synth.image_size = eff.model.image_size;
  } else if (key == "grid") {
    eff.model.grid = static_cast<int>(parse_int(key, value));
  } else if (key == "d") {
    eff.model.d = static_cast<int>(parse_int(key, value));
  } else if (key == "d_t") {
    eff.model.d_t = static_cast<int>(parse_int(key, value));
  } else if (key == "heads") {
    eff.model.heads = static_cast<int>(parse_int(key, value));
  } else if (key == "n_prototypes") {
    eff.model.n_prototypes = static_cast<int>(parse_int(key, value));
  } else if (key == "n1") {
    eff.model.n1 = static_cast<int>(parse_int(key, value));
  } else if (key == "n2") {
    eff.model.n2 = static_cast<int>(parse_int(key, value));
  } else if (key == "encoder_layers") {
    eff.model.encoder_layers = static_cast<int>(parse_int(key, value));
  } else if (key == "zero_shot_tokens") {
    eff.model.zero_shot_tokens = static_cast<int>(parse_int(key, value));
  } else if (key == "head_channels") {
    eff.model.head_channels.clear();
    for (const std::string& c : split_csv(value)) {
      eff.model.head_channels.push_back(static_cast<int>(parse_int(key, c)));
    }
  } else if (key == "leaky_slope") {
    eff.model.leaky_slope = parse_real(key, value);
  } else if (key == "backbone") {
    eff.model.backbone = value;
  } else if (key == "backbone_seed") {
    eff.model.backbone_seed = static_cast<uint64_t>(parse_int(key, value));
  } else if (key == "backbone_weights") {
    eff.model.backbone_weights = value;
  } else if (key == "combine") {
    eff.model.combine = parse_combine(value);
  } else if (key == "per_slot_embeddings") {
    eff.model.per_slot_embeddings = parse_bool(key, value);
  } else if (key == "per_branch_kd_projection") {
    eff.model.per_branch_kd_projection = parse_bool(key, value);
    // training
  } else if (key == "epochs") {
    eff.train.epochs = static_cast<int>(parse_int(key, value));
  } else if (key == "batch_size") {
    eff.train.batch_size = static_cast<int>(parse_int(key, value));
  } else if (key == "lr") {
    eff.train.lr = parse_real(key, value);
  } else if (key == "weight_decay") {
    eff.train.weight_decay = parse_real(key, value);
  } else if (key == "clip_norm") {
    eff.train.clip_norm = parse_real(key, value);
  } else if (key == "alpha") {
    eff.train.alpha = parse_real(key, value);
  } else if (key == "squared_kd") {
    eff.train.squared_kd = parse_bool(key, value);
  } else if (key == "use_kd") {
    eff.train.use_kd = parse_bool(key, value);
  } else if (key == "seed") {
    eff.train.seed = static_cast<uint64_t>(parse_int(key, value));
  } else if (key == "mode") {
    eff.train.mode = parse_mode(value);
  } else if (key == "vision_variant") {
    eff.train.vision_variant = parse_vision_variant(value);
  } else if (key == "mask_threshold") {
    eff.train.mask_threshold = parse_real(key, value);
  } else if (key == "checkpoint_dir") {
    eff.train.checkpoint_dir = value;
  } else if (key == "log_path") {
    eff.train.log_path = value;
  } else if (key == "density_sigma") {
    eff.train.augment.density_sigma = parse_real(key, value);
    eff.synth.density_sigma = eff.train.augment.density_sigma;
  } else if (key == "flip_prob") {
    eff.train.augment.flip_prob = parse_real(key, value);
  } else if (key == "jitter_prob") {
    eff.train.augment.jitter_prob = parse_real(key, value);
  } else if (key == "tile_prob") {
    eff.train.augment.tile_prob = parse_real(key, value);
    // synthetic data
  } else if (key == "n_train") {
    eff.synth.n_train = static_cast<int>(parse_int(key, value));
  } else if (key == "n_val") {
    eff.synth.n_val = static_cast<int>(parse_int(key, value));
  } else if (key == "n_test") {
    eff.synth.n_test = static_cast<int>(parse_int(key, value));
  } else if (key == "count_min") {
    eff.synth.count_min = static_cast<int>(parse_int(key, value));
  } else if (key == "count_max") {
    eff.synth.count_max = static_cast<int>(parse_int(key, value));
  } else if (key == "radius_min") {
    eff.synth.radius_min = parse_real(key, value);
  } else if (key == "radius_max") {
    eff.synth.radius_max = parse_real(key, value);
  } else if (key == "exemplars") {
    eff.synth.exemplars = static_cast<int>(parse_int(key, value));
  } else if (key == "train_categories") {
    eff.synth.train_categories = static_cast<int>(parse_int(key, value));
  } else if (key == "blur_sigma") {
    eff.synth.blur_sigma = parse_real(key, value);
  } else if (key == "noise_std") {
    eff.synth.noise_std = parse_real(key, value);
    // paths and components
  } else if (key == "data") {
    eff.data = value;
  } else if (key == "out") {
    eff.out = value;
  } else if (key == "checkpoint") {
    eff.checkpoint = value;
  } else if (key == "split") {
    eff.split = parse_split_name(value);
  } else if (key == "teacher") {
    if (value != "toy" && value != "real") {
      throw std::invalid_argument("teacher must be 'toy' or 'real', got '" + value + "'");
    }
    eff.teacher_kind = value;
  } else if (key == "teacher_seed") {
    eff.teacher_seed = static_cast<uint64_t>(parse_int(key, value));
  } else if (key == "teacher_export") {
    eff.teacher_export = value;
  } else if (key == "prompt_cache") {
    eff.prompt_cache = value;
  } else if (key == "name_free") {
    eff.name_free = parse_bool(key, value);
  } else if (key == "template") {
    eff.templates.push_back(value);
  } else if (key == "llm_query") {
    eff.llm_queries.push_back(value);
    // ablation grid
  } else if (key == "ablate_seeds") {
    eff.ablate_seeds.clear();
    for (const std::string& s : split_csv(value)) {
      eff.ablate_seeds.push_back(static_cast<uint64_t>(parse_int(key, s)));
    }
  } else if (key == "ablate_alphas") {
    eff.ablate_alphas.clear();
    for (const std::string& s : split_csv(value)) {
      eff.ablate_alphas.push_back(parse_real(key, s));
    }
  } else if (key == "ablate_vision") {
    eff.ablate_vision = parse_bool(key, value);
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

/// Flat key=value file; '#' starts a comment, later keys win, and the
/// `template` / `llm_query` keys accumulate instead of replacing.
inline void apply_config_file(Effective& eff, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(f, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                  ": expected key=value, got '" + t + "'");
    }
    pairs.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  // A preset rewrites whole sections, so it must land before other keys.
  for (const auto& [k, v] : pairs) {
    if (k != "preset") continue;
    if (v == "toy") {
      eff.model = ModelConfig::toy();
    } else if (v == "full") {
      eff.model = ModelConfig::full_scale();
    } else {
      throw std::invalid_argument("preset must be 'toy' or 'full', got '" + v + "'");
    }
    eff.synth.image_size = eff.model.image_size;
  }
  for (const auto& [k, v] : pairs) {
    if (k == "preset") continue;
    try {
      apply_key(eff, k, v);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + ": " + e.what());
    }
  }
}

/// Explicit setting wins; otherwise the environment variable, then a
/// prompts.json beside the data, then ./prompts.json.
inline std::string resolve_prompt_cache(const Effective& eff) {
  if (!eff.prompt_cache.empty()) return eff.prompt_cache;
  if (const char* env = std::getenv("VLCOUNT_PROMPT_CACHE")) {
    if (*env) return env;
  }
  if (!eff.data.empty()) {
    fs::path base = eff.data;
    if (base.filename() == "manifest.json") base = base.parent_path();
    return (base / "prompts.json").string();
  }
  return "prompts.json";
}

inline std::string resolve_manifest(const Effective& eff, const std::string& command) {
  if (eff.data.empty()) {
    throw std::invalid_argument(command +
                                " needs --data (or data= in the config file)");
  }
  fs::path p = eff.data;
  if (fs::is_directory(p)) p /= "manifest.json";
  return p.string();
}

inline void dump_effective(const Effective& eff, const std::string& command,
                           std::ostream& os) {
  auto kv = [&os](const std::string& k, const auto& v) {
    os << "[config] " << k << " = " << v << "\n";
  };
  kv("command", command);
  kv("image_size", eff.model.image_size);
  kv("grid", eff.model.grid);
  kv("d", eff.model.d);
  kv("d_t", eff.model.d_t);
  kv("heads", eff.model.heads);
  kv("n_prototypes", eff.model.n_prototypes);
  kv("n1", eff.model.n1);
  kv("n2", eff.model.n2);
  kv("encoder_layers", eff.model.encoder_layers);
  kv("zero_shot_tokens", eff.model.zero_shot_tokens);
  kv("backbone", eff.model.backbone);
  kv("backbone_seed", eff.model.backbone_seed);
  kv("epochs", eff.train.epochs);
  kv("batch_size", eff.train.batch_size);
  kv("lr", eff.train.lr);
  kv("weight_decay", eff.train.weight_decay);
  kv("clip_norm", eff.train.clip_norm);
  kv("alpha", eff.train.alpha);
  kv("squared_kd", eff.train.squared_kd ? "true" : "false");
  kv("use_kd", eff.train.use_kd ? "true" : "false");
  kv("seed", eff.train.seed);
  kv("mode", to_string(eff.train.mode));
  kv("vision_variant", to_string(eff.train.vision_variant));
  kv("mask_threshold", eff.train.mask_threshold);
  kv("density_sigma", eff.train.augment.density_sigma);
  kv("teacher", eff.teacher_kind);
  kv("teacher_seed", eff.teacher_seed);
  if (!eff.teacher_export.empty()) kv("teacher_export", eff.teacher_export);
  kv("prompt_cache", resolve_prompt_cache(eff));
  kv("name_free", eff.name_free ? "true" : "false");
  if (!eff.data.empty()) kv("data", eff.data);
  if (!eff.out.empty()) kv("out", eff.out);
  if (!eff.checkpoint.empty()) kv("checkpoint", eff.checkpoint);
  kv("split", eff.split);
}

inline std::shared_ptr<PromptBank> make_prompt_bank(const Effective& eff,
                                                    std::shared_ptr<PromptCache> cache) {
  std::vector<std::string> templates =
      eff.templates.empty() ? default_templates() : eff.templates;
  std::vector<std::string> queries =
      eff.llm_queries.empty() ? default_llm_queries() : eff.llm_queries;
  return std::make_shared<PromptBank>(std::move(templates), std::move(queries),
                                      std::move(cache), nullptr, eff.name_free);
}

inline void write_report_file(const std::string& path, const nlohmann::json& j,
                              const char* tag) {
  fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write report to '" + path + "'");
  f << j.dump(2) << "\n";
  std::cerr << "[" << tag << "] report written to " << path << "\n";
}

inline std::vector<std::string> manifest_categories(const std::string& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw std::runtime_error("cannot open manifest '" + manifest_path + "'");
  nlohmann::json j;
  f >> j;
  std::vector<std::string> cats;
  for (const char* key : {"categories_train", "categories_test"}) {
    if (!j.contains(key)) {
      throw std::runtime_error("manifest '" + manifest_path + "' lacks " + key);
    }
    for (const auto& c : j[key]) cats.push_back(c.get<std::string>());
  }
  return cats;
}

inline int cmd_make_synthetic(const Effective& eff) {
  if (eff.out.empty()) {
    throw std::invalid_argument("make-synthetic needs --out (target directory)");
  }
  std::cerr << "[make-synthetic] generating benchmark under " << eff.out << "\n";
  std::string manifest = generate_synthetic(eff.synth, eff.out, eff.train.seed);
  auto cache = std::make_shared<PromptCache>();
  auto bank = make_prompt_bank(eff, cache);
  bank->populate_fixtures(manifest_categories(manifest));
  std::string cache_path = (fs::path(eff.out) / "prompts.json").string();
  cache->save(cache_path);
  std::cerr << "[make-synthetic] prompt fixtures written to " << cache_path << "\n";
  std::cout << manifest << "\n";
  return 0;
}

inline int cmd_build_prompts(const Effective& eff) {
  std::string manifest = resolve_manifest(eff, "build-prompts");
  std::string cache_path = resolve_prompt_cache(eff);
  auto cache = std::make_shared<PromptCache>(PromptCache::load(cache_path));
  auto bank = make_prompt_bank(eff, cache);
  bank->populate_fixtures(manifest_categories(manifest));
  cache->save(cache_path);
  std::cerr << "[build-prompts] " << cache->size() << " responses cached\n";
  std::cout << cache_path << "\n";
  return 0;
}

inline std::shared_ptr<TeacherHandle> build_teacher(const Effective& eff) {
  return make_teacher(eff.teacher_kind, eff.teacher_seed, eff.model.d_t,
                      eff.teacher_export);
}

inline int cmd_train(Effective eff) {
  std::string manifest = resolve_manifest(eff, "train");
  eff.model.validate();
  if (eff.train.checkpoint_dir.empty()) {
    eff.train.checkpoint_dir =
        ((eff.out.empty() ? fs::path(".") : fs::path(eff.out)) / "checkpoints").string();
  }
  if (eff.train.log_path.empty() && !eff.out.empty()) {
    eff.train.log_path = (fs::path(eff.out) / "train.ndjson").string();
  }
  eff.train.validate();

  BenchmarkData bench = load_benchmark(manifest);
  std::shared_ptr<TeacherHandle> teacher;
  std::shared_ptr<PromptBank> bank;
  if (eff.train.use_kd) {
    teacher = build_teacher(eff);
    auto cache = std::make_shared<PromptCache>(PromptCache::load(resolve_prompt_cache(eff)));
    bank = make_prompt_bank(eff, cache);
  }
  Trainer trainer(eff.model, eff.train, teacher, bank);
  std::cerr << "[train] " << bench.train.size() << " train / " << bench.val.size()
            << " val images, " << eff.train.epochs << " epochs\n";
  TrainResult res = trainer.train(bench.train, bench.val);
  std::cerr << "[train] best val MAE " << res.best_val_mae << " at epoch "
            << res.best_epoch << "\n";

  nlohmann::ordered_json j;
  char hex[19];
  std::snprintf(hex, sizeof(hex), "0x%016llx",
                static_cast<unsigned long long>(trainer.config_hash()));
  j["config_hash"] = hex;
  j["epochs"] = eff.train.epochs;
  j["steps"] = res.steps.size();
  j["val_mae_per_epoch"] = res.val_mae_per_epoch;
  j["best_val_mae"] = res.best_val_mae;
  j["best_epoch"] = res.best_epoch;
  j["best_checkpoint"] = res.best_checkpoint_path;
  std::cout << j.dump(2) << "\n";
  return 0;
}

inline int cmd_evaluate(const Effective& eff) {
  if (eff.checkpoint.empty()) throw std::invalid_argument("evaluate needs --checkpoint");
  std::string manifest = resolve_manifest(eff, "evaluate");
  eff.model.validate();
  eff.train.validate();

  Checkpoint ckpt = Checkpoint::load(eff.checkpoint);
  try {
    ckpt.require_config(config_fingerprint(eff.model, eff.train));
  } catch (const std::runtime_error& e) {
    // A stale or wrong --config is a configuration error, not a runtime one.
    throw std::invalid_argument(e.what());
  }
  CountingModel model(eff.model, eff.train.seed);
  size_t pos = 0;
  model.parameters().load(ckpt.params_blob, pos);

  Dataset split = load_split(manifest, eff.split);
  EvalReport report;
  report.config_hash = ckpt.config_hash;
  report.checkpoint_id = fs::path(eff.checkpoint).filename().string();
  report.rows.push_back(evaluate_split(split.samples,
                                       model_predictor(model, eff.train.mode), eff.split,
                                       eff.train.mode));
  std::cout << report.to_table();
  if (!eff.out.empty()) write_report_file(eff.out, report.to_json(), "evaluate");
  return 0;
}

inline int cmd_ablate(const Effective& eff) {
  std::string manifest = resolve_manifest(eff, "ablate");
  eff.model.validate();
  eff.train.validate();

  BenchmarkData bench = load_benchmark(manifest);
  auto teacher = build_teacher(eff);
  auto cache = std::make_shared<PromptCache>(PromptCache::load(resolve_prompt_cache(eff)));
  auto bank = make_prompt_bank(eff, cache);

  AblationConfig acfg;
  acfg.model = eff.model;
  acfg.train = eff.train;
  acfg.train.checkpoint_dir.clear();  // grid cells keep no artifacts
  acfg.train.log_path.clear();
  acfg.seeds = eff.ablate_seeds;
  acfg.alphas = eff.ablate_alphas;
  acfg.include_vision = eff.ablate_vision;

  AblationReport report =
      run_ablation(acfg, make_training_runner(bench, teacher, bank), &std::cerr);
  std::cout << report.to_table();
  if (!eff.out.empty()) write_report_file(eff.out, report.to_json(), "ablate");
  if (eff.check_thresholds_flag) {
    auto failures = check_thresholds(report);
    for (const ThresholdFailure& f : failures) {
      std::cerr << "[ablate] threshold failure: " << f.what << "\n";
    }
    if (!failures.empty()) return 1;
    std::cerr << "[ablate] all thresholds hold\n";
  }
  return 0;
}

inline int cmd_inspect_checkpoint(const Effective& eff) {
  if (eff.checkpoint.empty()) {
    throw std::invalid_argument("inspect-checkpoint needs --checkpoint");
  }
  Checkpoint c = Checkpoint::load(eff.checkpoint);
  nlohmann::ordered_json j;
  char hex[19];
  std::snprintf(hex, sizeof(hex), "0x%016llx",
                static_cast<unsigned long long>(c.config_hash));
  j["config_hash"] = hex;
  j["epochs_completed"] = c.epoch;
  j["global_step"] = c.global_step;
  j["best_val_mae"] = c.best_val_mae;
  j["parameter_bytes"] = c.params_blob.size();
  j["optimizer_bytes"] = c.optimizer_blob.size();
  std::cout << j.dump(2) << "\n";
  return 0;
}

/// Parses argv and dispatches. Exit codes: 0 success, 1 operational failure,
/// 2 usage or configuration error.
inline int run(int argc, const char* const* argv) {
  CLI::App app{"Few-shot object counting: density regression with"
               " vision-language distillation"};
  app.require_subcommand(1);

  struct Flags {
    std::string config, mode, teacher, checkpoint, split, out, data;
    uint64_t seed = 0;
    double alpha = 0;
  } flags;
  bool check_flag = false;

  auto add_common = [&flags](CLI::App* sub) {
    sub->add_option("--config", flags.config, "flat key=value settings file");
    sub->add_option("--seed", flags.seed, "master seed");
    sub->add_option("--mode", flags.mode, "counting mode")
        ->check(CLI::IsMember({"few-shot", "zero-shot"}));
    sub->add_option("--teacher", flags.teacher, "teacher backend")
        ->check(CLI::IsMember({"toy", "real"}));
    sub->add_option("--checkpoint", flags.checkpoint, "checkpoint file");
    sub->add_option("--split", flags.split, "dataset split (aliases A-test/B-test)");
    sub->add_option("--out", flags.out, "output directory or file");
    sub->add_option("--alpha", flags.alpha, "distillation weighting in [0,1]");
    sub->add_option("--data", flags.data, "benchmark manifest or its directory");
  };

  CLI::App* make_synth = app.add_subcommand(
      "make-synthetic", "Generate the two-domain benchmark and prompt fixtures");
  CLI::App* build_prompts = app.add_subcommand(
      "build-prompts", "Fill the prompt cache for every benchmark category");
  CLI::App* train = app.add_subcommand("train", "Train a counting model");
  CLI::App* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on one split");
  CLI::App* ablate =
      app.add_subcommand("ablate", "Run the baseline/weighting/teacher-variant grid");
  CLI::App* inspect =
      app.add_subcommand("inspect-checkpoint", "Print checkpoint metadata as JSON");
  for (CLI::App* sub : {make_synth, build_prompts, train, evaluate, ablate, inspect}) {
    add_common(sub);
  }
  ablate->add_flag("--check", check_flag,
                   "exit 1 unless distillation beats the baseline thresholds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }
  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();

  try {
    Effective eff;
    if (sub->count("--config")) apply_config_file(eff, flags.config);
    if (sub->count("--seed")) eff.train.seed = flags.seed;
    if (sub->count("--mode")) eff.train.mode = parse_mode(flags.mode);
    if (sub->count("--teacher")) eff.teacher_kind = flags.teacher;
    if (sub->count("--checkpoint")) eff.checkpoint = flags.checkpoint;
    if (sub->count("--split")) eff.split = parse_split_name(flags.split);
    if (sub->count("--out")) eff.out = flags.out;
    if (sub->count("--alpha")) eff.train.alpha = flags.alpha;
    if (sub->count("--data")) eff.data = flags.data;
    eff.check_thresholds_flag = check_flag;

    dump_effective(eff, command, std::cerr);

    if (command == "make-synthetic") return cmd_make_synthetic(eff);
    if (command == "build-prompts") return cmd_build_prompts(eff);
    if (command == "train") return cmd_train(eff);
    if (command == "evaluate") return cmd_evaluate(eff);
    if (command == "ablate") return cmd_ablate(eff);
    if (command == "inspect-checkpoint") return cmd_inspect_checkpoint(eff);
    throw std::invalid_argument("unknown command '" + command + "'");
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

inline int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("vlcount");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace cli
}  // namespace vlcount
