#pragma once

// Run configuration: one flat, versioned JSON object. Every key is optional;
// missing keys keep their defaults, unknown keys are rejected by name.
//
//   {
//     "version": 1,
//     "alpha": 0.5, "beta": 1.0, "gamma": 1.0, "topk_one_to_many": 10,
//     "epsilon": 0.1, "eta_cap": null,
//     "lambda_d2d": 0.02, "lambda_o2d": 0.02, "lambda_d3d": 1.0, "lambda_o3d": 1.0,
//     "lambda_rot": 1.0, "lambda_z": 1.0, "lambda_distill": 0.1,
//     "k": 50,
//     "classes": ["Car", "Pedestrian", "Cyclist"],
//     "class_mean_dims": {"Car": [h, w, l], ...},
//     "iou_thresholds": {"Car": 0.7, "Pedestrian": 0.5, "Cyclist": 0.5},
//     "image_width": 1280, "image_height": 384
//   }

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>  // nlohmann/json (vendor/)

#include "mono3d/assign.hpp"
#include "mono3d/distill.hpp"
#include "mono3d/losses.hpp"

namespace mono3d {

inline constexpr int kConfigVersion = 1;
inline constexpr int kTopKKitti = 50;
inline constexpr int kTopKRope3D = 200;

struct RunConfig {
  MatchConfig match;            // alpha, beta, gamma, one-to-many top-k
  DistillConfig distill;        // epsilon, eta cap
  LossWeights weights;
  int k = kTopKKitti;           // gated-inference top-k
  std::vector<std::string> classes{"Car", "Pedestrian", "Cyclist"};
  std::map<std::string, Dims3> class_mean_dims{{"Car", {1.52563191462, 1.62856739989, 3.88311640418}},
                                               {"Pedestrian", {1.76255119, 0.66068622, 0.84422524}},
                                               {"Cyclist", {1.73698127, 0.59706367, 1.76282397}}};
  std::map<std::string, double> iou_thresholds{{"Car", 0.7}, {"Pedestrian", 0.5}, {"Cyclist", 0.5}};
  int image_width = 1280;
  int image_height = 384;

  int class_index(const std::string& name) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (classes[i] == name) return static_cast<int>(i);
    return -1;
  }

  std::vector<Dims3> mean_dims_by_index() const {
    std::vector<Dims3> out;
    for (const auto& c : classes) {
      auto it = class_mean_dims.find(c);
      out.push_back(it == class_mean_dims.end() ? Dims3{1, 1, 1} : it->second);
    }
    return out;
  }

  void validate() const {
    match.validate();
    weights.validate();
    require(distill.epsilon > 0, "config: epsilon must be positive");
    require(!distill.eta_cap || *distill.eta_cap > 0, "config: eta_cap must be positive");
    require(k >= 1, "config: k must be >= 1");
    require(!classes.empty(), "config: class list is empty");
    require(image_width > 0 && image_height > 0, "config: image size must be positive");
    for (const auto& c : classes)
      require(iou_thresholds.count(c) == 1, "config: every class needs an IoU threshold");
  }
};

inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["version"] = kConfigVersion;
  j["alpha"] = c.match.alpha;
  j["beta"] = c.match.beta;
  j["gamma"] = c.match.gamma;
  j["topk_one_to_many"] = c.match.topk;
  j["epsilon"] = c.distill.epsilon;
  j["eta_cap"] = c.distill.eta_cap ? nlohmann::json(*c.distill.eta_cap) : nlohmann::json(nullptr);
  j["lambda_d2d"] = c.weights.d2d;
  j["lambda_o2d"] = c.weights.o2d;
  j["lambda_d3d"] = c.weights.d3d;
  j["lambda_o3d"] = c.weights.o3d;
  j["lambda_rot"] = c.weights.rot;
  j["lambda_z"] = c.weights.z;
  j["lambda_distill"] = c.weights.distill;
  j["k"] = c.k;
  j["classes"] = c.classes;
  for (const auto& [name, d] : c.class_mean_dims) j["class_mean_dims"][name] = {d.h, d.w, d.l};
  j["iou_thresholds"] = c.iou_thresholds;
  j["image_width"] = c.image_width;
  j["image_height"] = c.image_height;
  return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("config: top level must be a JSON object");
  static const std::set<std::string> known{
      "version",    "alpha",      "beta",       "gamma",      "topk_one_to_many", "epsilon",
      "eta_cap",    "lambda_d2d", "lambda_o2d", "lambda_d3d", "lambda_o3d",       "lambda_rot",
      "lambda_z",   "lambda_distill", "k",      "classes",    "class_mean_dims",  "iou_thresholds",
      "image_width", "image_height"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ParseError("config: unknown key '" + key + "'");

  RunConfig c;
  try {
    if (j.contains("version") && j.at("version").get<int>() != kConfigVersion)
      throw ParseError("config: unsupported version " + j.at("version").dump());
    auto num = [&](const char* key, double& dst) {
      if (j.contains(key)) dst = j.at(key).get<double>();
    };
    auto integer = [&](const char* key, int& dst) {
      if (j.contains(key)) dst = j.at(key).get<int>();
    };
    num("alpha", c.match.alpha);
    num("beta", c.match.beta);
    num("gamma", c.match.gamma);
    integer("topk_one_to_many", c.match.topk);
    num("epsilon", c.distill.epsilon);
    if (j.contains("eta_cap") && !j.at("eta_cap").is_null()) c.distill.eta_cap = j.at("eta_cap").get<double>();
    num("lambda_d2d", c.weights.d2d);
    num("lambda_o2d", c.weights.o2d);
    num("lambda_d3d", c.weights.d3d);
    num("lambda_o3d", c.weights.o3d);
    num("lambda_rot", c.weights.rot);
    num("lambda_z", c.weights.z);
    num("lambda_distill", c.weights.distill);
    integer("k", c.k);
    if (j.contains("classes")) c.classes = j.at("classes").get<std::vector<std::string>>();
    if (j.contains("class_mean_dims")) {
      c.class_mean_dims.clear();
      for (const auto& [name, v] : j.at("class_mean_dims").items()) {
        const auto d = v.get<std::vector<double>>();
        if (d.size() != 3) throw ParseError("config: class_mean_dims['" + name + "'] must be [h, w, l]");
        c.class_mean_dims[name] = {d[0], d[1], d[2]};
      }
    }
    if (j.contains("iou_thresholds"))
      c.iou_thresholds = j.at("iou_thresholds").get<std::map<std::string, double>>();
    integer("image_width", c.image_width);
    integer("image_height", c.image_height);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what());
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

}  // namespace mono3d
