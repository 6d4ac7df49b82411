#pragma once

#include <functional>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vlcount/model/counting_model.hpp"
#include "vlcount/train/objectives.hpp"

namespace vlcount {

/// Anything that maps a sample to a density map. Injectable so metrics can
/// be tested against oracle and constant stubs without training a model.
using DensityPredictor = std::function<Tensor(const Sample&)>;

struct EvalRow {
  std::string split_name;
  std::string domain_tag;
  std::string mode;
  double mae = 0;
  double rmse = 0;
  int n_images = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  uint64_t config_hash = 0;
  std::string checkpoint_id;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    char hex[19];
    std::snprintf(hex, sizeof(hex), "0x%016llx",
                  static_cast<unsigned long long>(config_hash));
    j["config_hash"] = hex;
    j["checkpoint"] = checkpoint_id;
    j["rows"] = nlohmann::ordered_json::array();
    for (const EvalRow& r : rows) {
      j["rows"].push_back({{"split", r.split_name},
                           {"domain", r.domain_tag},
                           {"mode", r.mode},
                           {"mae", r.mae},
                           {"rmse", r.rmse},
                           {"n_images", r.n_images}});
    }
    return j;
  }

  std::string to_table() const {
    std::ostringstream os;
    os << std::left << std::setw(10) << "split" << std::setw(8) << "domain" << std::setw(11)
       << "mode" << std::right << std::setw(9) << "MAE" << std::setw(9) << "RMSE"
       << std::setw(9) << "images" << "\n";
    os << std::string(56, '-') << "\n";
    for (const EvalRow& r : rows) {
      os << std::left << std::setw(10) << r.split_name << std::setw(8) << r.domain_tag
         << std::setw(11) << r.mode << std::right << std::fixed << std::setprecision(3)
         << std::setw(9) << r.mae << std::setw(9) << r.rmse << std::setw(9) << r.n_images
         << "\n";
    }
    return os.str();
  }
};

/// Metrics over one split: predicted count = sum of the predicted density.
inline EvalRow evaluate_split(const std::vector<Sample>& samples,
                              const DensityPredictor& predict,
                              const std::string& split_name, CountingMode mode) {
  if (samples.empty()) {
    throw std::invalid_argument("evaluate_split: split '" + split_name + "' is empty");
  }
  std::vector<double> gt, pred;
  gt.reserve(samples.size());
  pred.reserve(samples.size());
  for (const Sample& s : samples) {
    Tensor density = predict(s);
    gt.push_back(static_cast<double>(s.count()));
    pred.push_back(density.sum());
  }
  auto [mae, rmse] = mae_rmse(gt, pred);
  EvalRow row;
  row.split_name = split_name;
  row.domain_tag = samples.front().domain;
  row.mode = to_string(mode);
  row.mae = mae;
  row.rmse = rmse;
  row.n_images = static_cast<int>(samples.size());
  return row;
}

/// Wraps a trained model as a predictor. The model must outlive the returned
/// callable; forward passes only, no parameter updates, no teacher.
inline DensityPredictor model_predictor(const CountingModel& model, CountingMode mode) {
  return [&model, mode](const Sample& s) {
    return model.forward(s.image, s.boxes, mode).density.value();
  };
}

}  // namespace vlcount
