#pragma once

#include <fstream>

#include "vlcount/core/io.hpp"
#include "vlcount/core/rng.hpp"
#include "vlcount/nn/adamw.hpp"
#include "vlcount/nn/module.hpp"

namespace vlcount {

/// Everything needed to resume training bit-exactly: model parameters,
/// optimizer state, both RNG streams, and progress counters. The stored
/// config hash guards against silently loading weights into a differently
/// shaped model.
struct Checkpoint {
  static constexpr uint32_t kFormatVersion = 1;

  uint64_t config_hash = 0;
  uint32_t epoch = 0;        // epochs completed
  uint64_t global_step = 0;  // optimizer steps taken
  double best_val_mae = std::numeric_limits<double>::infinity();
  std::string train_rng_state;
  std::string data_rng_state;
  std::string params_blob;     // ParameterStore::save output
  std::string optimizer_blob;  // AdamW::save output

  void save(const std::string& path) const {
    std::string blob = "CKP1";
    detail::put_u32(blob, kFormatVersion);
    detail::put_u64(blob, config_hash);
    detail::put_u32(blob, epoch);
    detail::put_u64(blob, global_step);
    detail::put_f64(blob, best_val_mae);
    detail::put_string(blob, train_rng_state);
    detail::put_string(blob, data_rng_state);
    detail::put_string(blob, params_blob);
    detail::put_string(blob, optimizer_blob);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint " + path);
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!f) throw std::runtime_error("short write on checkpoint " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read checkpoint " + path);
    std::string blob((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
    if (blob.size() < 4 || blob.substr(0, 4) != "CKP1") {
      throw std::runtime_error(path + " is not a checkpoint file");
    }
    size_t pos = 4;
    uint32_t version = detail::get_u32(blob, pos);
    if (version != kFormatVersion) {
      throw std::runtime_error(path + ": checkpoint format version " +
                               std::to_string(version) + ", this build reads " +
                               std::to_string(kFormatVersion));
    }
    Checkpoint c;
    c.config_hash = detail::get_u64(blob, pos);
    c.epoch = detail::get_u32(blob, pos);
    c.global_step = detail::get_u64(blob, pos);
    c.best_val_mae = detail::get_f64(blob, pos);
    c.train_rng_state = detail::get_string(blob, pos);
    c.data_rng_state = detail::get_string(blob, pos);
    c.params_blob = detail::get_string(blob, pos);
    c.optimizer_blob = detail::get_string(blob, pos);
    if (pos != blob.size()) {
      throw std::runtime_error(path + ": trailing bytes after checkpoint payload");
    }
    return c;
  }

  void require_config(uint64_t expected_hash) const {
    if (config_hash != expected_hash) {
      char want[19], have[19];
      std::snprintf(want, sizeof(want), "0x%016llx",
                    static_cast<unsigned long long>(expected_hash));
      std::snprintf(have, sizeof(have), "0x%016llx",
                    static_cast<unsigned long long>(config_hash));
      throw std::runtime_error(std::string("checkpoint was written for config ") + have +
                               " but the current config hashes to " + want);
    }
  }
};

}  // namespace vlcount
