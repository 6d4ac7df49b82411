#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlcount/core/io.hpp"

namespace vlcount {

using Box = std::array<double, 4>;    // x0, y0, x1, y1
using Point = std::array<double, 2>;  // x, y

/// One annotated image: pixel data, exemplar boxes, one point per object
/// instance, and the category being counted.
struct Sample {
  Tensor image;  // {3, H, W}, values in [0, 1]
  std::vector<Box> boxes;
  std::vector<Point> points;
  std::string category;
  std::string image_path;
  std::string split;
  std::string domain;  // "A" or "B" for synthetic data, "" otherwise

  int height() const { return image.dim(1); }
  int width() const { return image.dim(2); }
  int count() const { return static_cast<int>(points.size()); }
};

struct Annotation {
  std::vector<Box> boxes;
  std::vector<Point> points;
  std::string category;
};

/// Parses an annotation file of the form
///   { "<image_file>": { "boxes": [[x0,y0,x1,y1], ...],
///                       "points": [[x,y], ...],
///                       "category": "<name>" }, ... }
/// Errors name the offending image key and array index.
inline std::map<std::string, Annotation> load_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("annotations: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("annotations: parse error in '" + path + "': " + e.what());
  }
  if (!j.is_object()) {
    throw std::runtime_error("annotations: top level of '" + path +
                             "' must be an object keyed by image file");
  }
  std::map<std::string, Annotation> out;
  for (auto& [key, entry] : j.items()) {
    if (!entry.is_object()) {
      throw std::runtime_error("annotations: entry for '" + key + "' must be an object");
    }
    Annotation a;
    if (!entry.contains("category") || !entry["category"].is_string()) {
      throw std::runtime_error("annotations: entry for '" + key +
                               "' is missing a string 'category'");
    }
    a.category = entry["category"].get<std::string>();
    const auto& boxes = entry.value("boxes", nlohmann::json::array());
    for (size_t i = 0; i < boxes.size(); ++i) {
      if (!boxes[i].is_array() || boxes[i].size() != 4) {
        throw std::runtime_error("annotations: '" + key + "' box " + std::to_string(i) +
                                 " must be [x0, y0, x1, y1]");
      }
      Box b = {boxes[i][0].get<double>(), boxes[i][1].get<double>(),
               boxes[i][2].get<double>(), boxes[i][3].get<double>()};
      if (!(b[0] < b[2]) || !(b[1] < b[3])) {
        throw std::runtime_error("annotations: '" + key + "' box " + std::to_string(i) +
                                 " is degenerate (needs x0 < x1 and y0 < y1)");
      }
      a.boxes.push_back(b);
    }
    const auto& points = entry.value("points", nlohmann::json::array());
    for (size_t i = 0; i < points.size(); ++i) {
      if (!points[i].is_array() || points[i].size() != 2) {
        throw std::runtime_error("annotations: '" + key + "' point " +
                                 std::to_string(i) + " must be [x, y]");
      }
      a.points.push_back({points[i][0].get<double>(), points[i][1].get<double>()});
    }
    out[key] = std::move(a);
  }
  return out;
}

inline void save_annotations(const std::string& path,
                             const std::map<std::string, Annotation>& annotations) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [key, a] : annotations) {
    nlohmann::ordered_json entry;
    entry["boxes"] = nlohmann::ordered_json::array();
    for (const Box& b : a.boxes) entry["boxes"].push_back({b[0], b[1], b[2], b[3]});
    entry["points"] = nlohmann::ordered_json::array();
    for (const Point& p : a.points) entry["points"].push_back({p[0], p[1]});
    entry["category"] = a.category;
    j[key] = std::move(entry);
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("annotations: cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

/// A split of samples loaded fully into memory.
struct Dataset {
  std::vector<Sample> samples;

  size_t size() const { return samples.size(); }
  const Sample& operator[](size_t i) const { return samples[i]; }

  /// All distinct categories in this split, sorted.
  std::vector<std::string> categories() const {
    std::vector<std::string> cats;
    for (const Sample& s : samples) cats.push_back(s.category);
    std::sort(cats.begin(), cats.end());
    cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
    return cats;
  }
};

/// Loads one split from a benchmark manifest written by the synthetic
/// generator. The manifest lists every sample with its image path (relative
/// to the manifest directory), split, domain, and category; annotations are
/// in a sibling annotations.json keyed by the same relative paths.
inline Dataset load_split(const std::string& manifest_path, const std::string& split) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("manifest: cannot open '" + manifest_path + "'");
  nlohmann::json j;
  in >> j;
  fs::path root = fs::path(manifest_path).parent_path();
  auto annotations = load_annotations((root / "annotations.json").string());

  Dataset ds;
  for (const auto& rec : j.at("samples")) {
    if (rec.at("split").get<std::string>() != split) continue;
    Sample s;
    s.image_path = rec.at("image").get<std::string>();
    s.split = split;
    s.domain = rec.value("domain", "");
    auto it = annotations.find(s.image_path);
    if (it == annotations.end()) {
      throw std::runtime_error("manifest: no annotation for '" + s.image_path + "'");
    }
    s.boxes = it->second.boxes;
    s.points = it->second.points;
    s.category = it->second.category;
    s.image = load_image((root / s.image_path).string());
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) {
    throw std::runtime_error("manifest: split '" + split + "' is empty in '" +
                             manifest_path + "'");
  }
  return ds;
}

}  // namespace vlcount
