#pragma once

#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "vlcount/data/augment.hpp"
#include "vlcount/model/counting_model.hpp"
#include "vlcount/teacher/memo.hpp"
#include "vlcount/text/prompt_bank.hpp"
#include "vlcount/train/checkpoint.hpp"
#include "vlcount/train/objectives.hpp"

namespace vlcount {

struct TrainConfig {
  int epochs = 150;
  int batch_size = 4;
  double lr = 1e-4;  // fixed; no schedule
  double weight_decay = 1e-2;
  double clip_norm = 0.1;
  double alpha = 0.9;
  bool squared_kd = false;
  bool use_kd = true;  // false = plain counting baseline, no distillation
  uint64_t seed = 0;
  CountingMode mode = CountingMode::kFewShot;
  VisionVariant vision_variant = VisionVariant::kMaskPool;
  double mask_threshold = 0.5;
  AugmentConfig augment;
  std::string checkpoint_dir;  // empty = keep checkpoints off disk
  std::string log_path;        // empty = no step log

  void validate() const {
    if (epochs <= 0) throw std::invalid_argument("epochs must be positive");
    if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
    if (lr <= 0) throw std::invalid_argument("lr must be positive");
    if (weight_decay < 0) throw std::invalid_argument("weight_decay must be >= 0");
    if (clip_norm <= 0) throw std::invalid_argument("clip_norm must be positive");
    if (augment.density_sigma <= 0) {
      throw std::invalid_argument("density_sigma must be positive");
    }
    check_alpha(alpha);
  }

  void hash_into(uint64_t& h) const {
    auto mix = [&h](const void* p, size_t n) { h = fnv1a64(p, n, h); };
    mix(&batch_size, sizeof(batch_size));
    mix(&lr, sizeof(lr));
    mix(&weight_decay, sizeof(weight_decay));
    mix(&clip_norm, sizeof(clip_norm));
    mix(&alpha, sizeof(alpha));
    mix(&squared_kd, sizeof(squared_kd));
    mix(&use_kd, sizeof(use_kd));
    mix(&seed, sizeof(seed));
    uint8_t m = static_cast<uint8_t>(mode), v = static_cast<uint8_t>(vision_variant);
    mix(&m, 1);
    mix(&v, 1);
    mix(&mask_threshold, sizeof(mask_threshold));
    mix(&augment.density_sigma, sizeof(augment.density_sigma));
    // epochs and paths deliberately excluded: extending a run or moving its
    // artifacts must not invalidate checkpoints.
  }
};

/// Joint fingerprint of the architecture and the optimization settings; a
/// checkpoint binds to this value and refuses to load under any other.
inline uint64_t config_fingerprint(const ModelConfig& mcfg, const TrainConfig& tcfg) {
  uint64_t h = kFnvOffset;
  mcfg.hash_into(h);
  tcfg.hash_into(h);
  return h;
}

struct StepRecord {
  int epoch = 0;
  long long step = 0;
  double density = 0, v_kd = 0, l_kd = 0, total = 0;
  double grad_norm = 0;
};

struct TrainResult {
  std::vector<StepRecord> steps;
  std::vector<double> val_mae_per_epoch;
  double best_val_mae = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  std::string best_checkpoint_path;
};

/// Runs the optimization loop: augment, forward, distill, clip, step. The
/// teacher is consulted only inside train_step; validation and evaluation
/// never touch it.
class Trainer {
 public:
  Trainer(const ModelConfig& mcfg, const TrainConfig& tcfg,
          std::shared_ptr<TeacherHandle> teacher, std::shared_ptr<PromptBank> prompts)
      : mcfg_(mcfg),
        tcfg_(tcfg),
        model_(mcfg, tcfg.seed),
        teacher_(std::move(teacher)),
        prompts_(std::move(prompts)),
        train_rng_(derive_seed(tcfg.seed, 0xA001)),
        data_rng_(derive_seed(tcfg.seed, 0xA002)) {
    tcfg_.validate();
    if (tcfg_.use_kd) {
      if (!teacher_) throw std::invalid_argument("distillation requires a teacher");
      if (!prompts_) throw std::invalid_argument("distillation requires a prompt bank");
      if (teacher_->embed_dim() != mcfg_.d_t) {
        throw std::invalid_argument("teacher embeds to " +
                                    std::to_string(teacher_->embed_dim()) +
                                    " dims but the model projects to " +
                                    std::to_string(mcfg_.d_t));
      }
    }
    AdamW::Options opt;
    opt.lr = tcfg_.lr;
    opt.weight_decay = tcfg_.weight_decay;
    optimizer_ = AdamW(opt);
  }

  CountingModel& model() { return model_; }
  const CountingModel& model() const { return model_; }
  uint64_t config_hash() const { return config_fingerprint(mcfg_, tcfg_); }
  long long global_step() const { return global_step_; }
  const MemoStore& memo() const { return memo_; }

  /// One optimization step on an explicit batch; returns the pre-step losses.
  LossTerms train_step(const std::vector<Sample>& batch) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    std::vector<Var> densities, kd_v, kd_l;
    std::vector<Tensor> gt_densities, targets_v, targets_l;
    std::vector<double> counts;
    for (const Sample& s : batch) {
      AugmentedSample aug = augment_sample(s, tcfg_.augment, train_rng_);
      ForwardResult fwd = model_.forward(aug.input_image, aug.boxes, tcfg_.mode);
      densities.push_back(fwd.density);
      gt_densities.push_back(aug.density);
      counts.push_back(static_cast<double>(aug.points.size()));
      if (tcfg_.use_kd) {
        TeacherTargets t = targets_for(aug.teacher_image, s.category);
        kd_v.push_back(fwd.kd_v);
        kd_l.push_back(fwd.kd_l);
        targets_v.push_back(t.r_v);
        targets_l.push_back(t.r_l);
      }
    }
    Var density = density_loss(densities, gt_densities, counts);
    Var v_kd = tcfg_.use_kd ? kd_loss(kd_v, targets_v, tcfg_.squared_kd)
                                      : Var::constant(Tensor::full({1}, 0.0));
    Var l_kd = tcfg_.use_kd ? kd_loss(kd_l, targets_l, tcfg_.squared_kd)
                                      : Var::constant(Tensor::full({1}, 0.0));
    LossTerms losses = combine_losses(density, v_kd, l_kd, tcfg_.alpha);
    if (!std::isfinite(losses.total_value())) {
      throw std::runtime_error(
          "non-finite loss at step " + std::to_string(global_step_) +
          ": density=" + std::to_string(losses.density_value()) +
          " v_kd=" + std::to_string(losses.v_kd_value()) +
          " l_kd=" + std::to_string(losses.l_kd_value()));
    }
    model_.parameters().zero_grad();
    losses.total.backward();
    last_grad_norm_ = clip_global_norm(model_.parameters(), tcfg_.clip_norm);
    optimizer_.step(model_.parameters());
    ++global_step_;
    return losses;
  }

  /// Mean absolute count error over a split; forward passes only.
  double validate_mae(const std::vector<Sample>& samples) const {
    if (samples.empty()) throw std::invalid_argument("validate_mae: no samples");
    std::vector<double> gt, pred;
    for (const Sample& s : samples) {
      ForwardResult fwd = model_.forward(s.image, s.boxes, tcfg_.mode);
      gt.push_back(static_cast<double>(s.count()));
      pred.push_back(fwd.count());
    }
    return mae_rmse(gt, pred).first;
  }

  /// Full loop with per-epoch validation, checkpointing, and step logging.
  TrainResult train(const std::vector<Sample>& train_split,
                    const std::vector<Sample>& val_split) {
    if (train_split.empty()) throw std::invalid_argument("train: empty training split");
    std::ofstream log;
    if (!tcfg_.log_path.empty()) {
      std::filesystem::path parent = std::filesystem::path(tcfg_.log_path).parent_path();
      if (!parent.empty()) std::filesystem::create_directories(parent);
      log.open(tcfg_.log_path, std::ios::app);
      if (!log) throw std::runtime_error("cannot open training log " + tcfg_.log_path);
    }
    if (!tcfg_.checkpoint_dir.empty()) {
      std::filesystem::create_directories(tcfg_.checkpoint_dir);
    }

    TrainResult result;
    result.best_val_mae = best_val_mae_;
    for (int epoch = start_epoch_; epoch < tcfg_.epochs; ++epoch) {
      std::vector<size_t> order(train_split.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      shuffle(order);

      for (size_t ofs = 0; ofs < order.size(); ofs += tcfg_.batch_size) {
        std::vector<Sample> batch;
        for (size_t j = ofs; j < std::min(ofs + tcfg_.batch_size, order.size()); ++j) {
          batch.push_back(train_split[order[j]]);
        }
        LossTerms losses = train_step(batch);
        StepRecord rec{epoch, global_step_, losses.density_value(), losses.v_kd_value(),
                       losses.l_kd_value(), losses.total_value(), last_grad_norm_};
        result.steps.push_back(rec);
        if (log.is_open()) write_log(log, rec);
      }

      double val_mae = val_split.empty() ? 0.0 : validate_mae(val_split);
      result.val_mae_per_epoch.push_back(val_mae);
      bool improved = val_mae < best_val_mae_;
      if (improved) {
        best_val_mae_ = val_mae;
        result.best_val_mae = val_mae;
        result.best_epoch = epoch;
      }
      if (!tcfg_.checkpoint_dir.empty()) {
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
        std::string path = tcfg_.checkpoint_dir + "/" + name;
        make_checkpoint(epoch + 1).save(path);
        if (improved) {
          std::string best = tcfg_.checkpoint_dir + "/best.ckpt";
          std::filesystem::copy_file(path, best,
                                     std::filesystem::copy_options::overwrite_existing);
          result.best_checkpoint_path = best;
        }
      }
    }
    if (log.is_open()) {
      log.flush();
      if (!log) throw std::runtime_error("write failure on training log " + tcfg_.log_path);
    }
    return result;
  }

  Checkpoint make_checkpoint(int epochs_done) const {
    Checkpoint c;
    c.config_hash = config_hash();
    c.epoch = static_cast<uint32_t>(epochs_done);
    c.global_step = static_cast<uint64_t>(global_step_);
    c.best_val_mae = best_val_mae_;
    c.train_rng_state = train_rng_.state();
    c.data_rng_state = data_rng_.state();
    model_.parameters().save(c.params_blob);
    optimizer_.save(c.optimizer_blob);
    return c;
  }

  void restore(const Checkpoint& c) {
    c.require_config(config_hash());
    size_t pos = 0;
    model_.parameters().load(c.params_blob, pos);
    pos = 0;
    optimizer_.load(c.optimizer_blob, pos);
    train_rng_.set_state(c.train_rng_state);
    data_rng_.set_state(c.data_rng_state);
    start_epoch_ = static_cast<int>(c.epoch);
    global_step_ = static_cast<long long>(c.global_step);
    best_val_mae_ = c.best_val_mae;
  }

  double last_grad_norm() const { return last_grad_norm_; }

 private:
  void shuffle(std::vector<size_t>& order) {
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(data_rng_.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
  }

  /// Distillation targets with per-category text caching and an image-keyed
  /// memo for the vision side.
  TeacherTargets targets_for(const Tensor& teacher_image, const std::string& category) {
    uint64_t key = target_cache_key(teacher_image, category, tcfg_.vision_variant,
                                    teacher_->weight_hash());
    if (const TeacherTargets* hit = memo_.lookup(key)) return *hit;

    const Tensor& r_l = category_text(category);
    TeacherTargets t;
    t.r_l = r_l;
    switch (tcfg_.vision_variant) {
      case VisionVariant::kMaskPool: {
        Tensor feats = teacher_->dense_features(teacher_image);
        Tensor mask = normalize_minmax(cosine_map(feats, r_l));
        t.r_v = mask_pool(feats, mask, tcfg_.mask_threshold);
        break;
      }
      case VisionVariant::kGlobalPool: {
        Tensor feats = teacher_->dense_features(teacher_image);
        Tensor ones({feats.dim(0), feats.dim(1)});
        ones.fill(1.0);
        t.r_v = mask_pool(feats, ones, 0.5);
        break;
      }
      case VisionVariant::kClsToken:
        t.r_v = teacher_->summary_feature(teacher_image);
        break;
    }
    memo_.insert(key, t);
    return t;
  }

  const Tensor& category_text(const std::string& category) {
    auto it = text_cache_.find(category);
    if (it != text_cache_.end()) return it->second;
    PromptSet set = prompts_->build(category);
    Tensor r_l = text_representation(set.prompts, *teacher_);
    return text_cache_.emplace(category, std::move(r_l)).first->second;
  }

  static void write_log(std::ofstream& log, const StepRecord& r) {
    log << "{\"epoch\":" << r.epoch << ",\"step\":" << r.step << ",\"density\":" << r.density
        << ",\"v_kd\":" << r.v_kd << ",\"l_kd\":" << r.l_kd << ",\"total\":" << r.total
        << ",\"grad_norm\":" << r.grad_norm << "}\n";
    log.flush();
    if (!log) throw std::runtime_error("write failure on training log");
  }

  ModelConfig mcfg_;
  TrainConfig tcfg_;
  CountingModel model_;
  std::shared_ptr<TeacherHandle> teacher_;
  std::shared_ptr<PromptBank> prompts_;
  AdamW optimizer_;
  Rng train_rng_, data_rng_;
  MemoStore memo_;
  std::unordered_map<std::string, Tensor> text_cache_;
  long long global_step_ = 0;
  int start_epoch_ = 0;
  double best_val_mae_ = std::numeric_limits<double>::infinity();
  double last_grad_norm_ = 0;
};

}  // namespace vlcount
