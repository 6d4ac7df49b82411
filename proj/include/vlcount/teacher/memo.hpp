#pragma once

#include <fstream>
#include <map>

#include "vlcount/core/io.hpp"
#include "vlcount/teacher/teacher.hpp"

namespace vlcount {

/// Cache of computed distillation targets keyed by an image/prompt hash.
/// Binary format "MEM1": magic, u64 count, then per entry u64 key + r_v + r_l.
class MemoStore {
 public:
  const TeacherTargets* lookup(uint64_t key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
  }

  void insert(uint64_t key, TeacherTargets t) { entries_[key] = std::move(t); }
  size_t size() const { return entries_.size(); }

  void save(const std::string& path) const {
    std::string blob = "MEM1";
    detail::put_u64(blob, entries_.size());
    for (const auto& [key, t] : entries_) {
      detail::put_u64(blob, key);
      detail::put_tensor(blob, t.r_v);
      detail::put_tensor(blob, t.r_l);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  }

  static MemoStore load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::string blob((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
    if (blob.size() < 4 || blob.substr(0, 4) != "MEM1") {
      throw std::runtime_error(path + " is not a target cache file");
    }
    size_t pos = 4;
    MemoStore store;
    uint64_t n = detail::get_u64(blob, pos);
    for (uint64_t i = 0; i < n; ++i) {
      uint64_t key = detail::get_u64(blob, pos);
      TeacherTargets t;
      t.r_v = detail::get_tensor(blob, pos);
      t.r_l = detail::get_tensor(blob, pos);
      store.entries_[key] = std::move(t);
    }
    return store;
  }

 private:
  std::map<uint64_t, TeacherTargets> entries_;
};

/// Cache key: image content plus everything else that affects the targets.
inline uint64_t target_cache_key(const Tensor& image, const std::string& category,
                                 VisionVariant variant, uint64_t teacher_hash) {
  uint64_t h = tensor_hash(image);
  h = fnv1a64(category.data(), category.size(), h);
  uint8_t v = static_cast<uint8_t>(variant);
  h = fnv1a64(&v, 1, h);
  h = fnv1a64(&teacher_hash, sizeof(teacher_hash), h);
  return h;
}

/// Adapter exposing externally exported embeddings through the teacher
/// interface. The export file ("EXT1") maps image content hashes to dense
/// and summary features and prompt strings to text embeddings; asking for
/// anything absent is an error that names the missing item, so a training
/// run either has full coverage or fails loudly up front.
class PrecomputedTeacher : public TeacherHandle {
 public:
  explicit PrecomputedTeacher(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read teacher export " + path);
    std::string blob((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
    if (blob.size() < 4 || blob.substr(0, 4) != "EXT1") {
      throw std::runtime_error(path + " is not a teacher export file");
    }
    size_t pos = 4;
    d_t_ = static_cast<int>(detail::get_u32(blob, pos));
    uint64_t n_dense = detail::get_u64(blob, pos);
    for (uint64_t i = 0; i < n_dense; ++i) {
      uint64_t key = detail::get_u64(blob, pos);
      dense_[key] = detail::get_tensor(blob, pos);
    }
    uint64_t n_summary = detail::get_u64(blob, pos);
    for (uint64_t i = 0; i < n_summary; ++i) {
      uint64_t key = detail::get_u64(blob, pos);
      summary_[key] = detail::get_tensor(blob, pos);
    }
    uint64_t n_text = detail::get_u64(blob, pos);
    for (uint64_t i = 0; i < n_text; ++i) {
      std::string prompt = detail::get_string(blob, pos);
      text_[prompt] = detail::get_tensor(blob, pos);
    }
    if (pos != blob.size()) {
      throw std::runtime_error(path + ": trailing bytes after teacher export");
    }
    hash_ = fnv1a64(blob.data(), blob.size());
  }

  int embed_dim() const override { return d_t_; }

  Tensor dense_features(const Tensor& image) const override {
    uint64_t key = tensor_hash(image);
    auto it = dense_.find(key);
    if (it == dense_.end()) {
      throw std::runtime_error(
          "teacher export has no dense features for image hash " + hex(key) +
          "; re-export with this image included");
    }
    return it->second;
  }

  Tensor summary_feature(const Tensor& image) const override {
    uint64_t key = tensor_hash(image);
    auto it = summary_.find(key);
    if (it == summary_.end()) {
      throw std::runtime_error(
          "teacher export has no summary feature for image hash " + hex(key) +
          "; re-export with this image included");
    }
    return it->second;
  }

  Tensor text_embedding(const std::string& prompt) const override {
    auto it = text_.find(prompt);
    if (it == text_.end()) {
      throw std::runtime_error("teacher export has no embedding for prompt \"" +
                               prompt + "\"; re-export with this prompt included");
    }
    return it->second;
  }

  uint64_t weight_hash() const override { return hash_; }
  std::string name() const override { return "precomputed"; }

  /// Builds an export blob; used by tests and by the export utility.
  static std::string serialize(int d_t,
                               const std::map<uint64_t, Tensor>& dense,
                               const std::map<uint64_t, Tensor>& summary,
                               const std::map<std::string, Tensor>& text) {
    std::string blob = "EXT1";
    detail::put_u32(blob, static_cast<uint32_t>(d_t));
    detail::put_u64(blob, dense.size());
    for (const auto& [k, t] : dense) {
      detail::put_u64(blob, k);
      detail::put_tensor(blob, t);
    }
    detail::put_u64(blob, summary.size());
    for (const auto& [k, t] : summary) {
      detail::put_u64(blob, k);
      detail::put_tensor(blob, t);
    }
    detail::put_u64(blob, text.size());
    for (const auto& [k, t] : text) {
      detail::put_string(blob, k);
      detail::put_tensor(blob, t);
    }
    return blob;
  }

 private:
  static std::string hex(uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
  }

  int d_t_ = 0;
  std::map<uint64_t, Tensor> dense_;
  std::map<uint64_t, Tensor> summary_;
  std::map<std::string, Tensor> text_;
  uint64_t hash_ = 0;
};

inline std::shared_ptr<TeacherHandle> make_teacher(const std::string& kind,
                                                   uint64_t seed, int d_t,
                                                   const std::string& export_path) {
  if (kind == "toy") return std::make_shared<ToyTeacher>(seed, d_t);
  if (kind == "real") {
    if (export_path.empty()) {
      throw std::invalid_argument(
          "the real teacher reads a precomputed export; pass its path "
          "(--teacher-export or teacher_export= in the config)");
    }
    return std::make_shared<PrecomputedTeacher>(export_path);
  }
  throw std::invalid_argument("teacher must be toy|real, got '" + kind + "'");
}

}  // namespace vlcount
