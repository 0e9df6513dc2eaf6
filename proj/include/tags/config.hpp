#pragma once

// JSON (de)serialization of every configuration block. Readers reject
// unknown keys by name; missing keys keep their defaults.

#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "tags/errors.hpp"
#include "tags/inference.hpp"
#include "tags/losses.hpp"
#include "tags/model_config.hpp"
#include "tags/train_config.hpp"

namespace tags {

using nlohmann::json;

namespace detail {

class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ValidationError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ValidationError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items())
      if (!seen_.count(k)) throw ValidationError(where_ + ": unknown key '" + k + "'");
  }

  const std::string& where() const { return where_; }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

// ModelConfig ---------------------------------------------------------------

inline json to_json(const ModelConfig& c) {
  json pooling = json::object();
  for (const auto& [s, p] : c.pooling) pooling[std::to_string(s)] = {p.kernel, p.stride, p.pad};
  return {{"input_dim", c.input_dim},
          {"width", c.width},
          {"num_heads", c.num_heads},
          {"scales", c.scales},
          {"num_classes", c.num_classes},
          {"snippets", c.snippets},
          {"kernel_width", c.kernel_width},
          {"consistency_width", c.consistency_width},
          {"positional_encoding", c.positional_encoding},
          {"positional_base", c.positional_base},
          {"pooling", pooling}};
}

inline void from_json(const json& j, ModelConfig& c, const std::string& where = "model") {
  detail::ObjectReader r(j, where);
  r.get("input_dim", c.input_dim);
  r.get("width", c.width);
  r.get("num_heads", c.num_heads);
  r.get("scales", c.scales);
  r.get("num_classes", c.num_classes);
  r.get("snippets", c.snippets);
  r.get("kernel_width", c.kernel_width);
  r.get("consistency_width", c.consistency_width);
  r.get("positional_encoding", c.positional_encoding);
  r.get("positional_base", c.positional_base);
  if (const json* p = r.child("pooling")) {
    if (!p->is_object()) throw ValidationError(where + ".pooling: expected an object");
    c.pooling.clear();
    for (const auto& [k, v] : p->items()) {
      if (!v.is_array() || v.size() != 3) throw ValidationError(where + ".pooling." + k + ": expected [k, stride, pad]");
      c.pooling[std::stoul(k)] = PoolingConfig{v[0].get<std::size_t>(), v[1].get<std::size_t>(), v[2].get<std::size_t>()};
    }
  }
  r.finish();
}

// LossWeights ---------------------------------------------------------------

inline json to_json(const LossWeights& w) {
  return {{"lambda1", w.lambda1},       {"lambda2", w.lambda2},     {"gamma", w.gamma},
          {"alpha", w.alpha},           {"beta", w.beta},           {"delta", w.delta},
          {"erosion_kernel", w.erosion_kernel}, {"eps", w.eps},     {"overlap_tau", w.overlap_tau},
          {"prob_clamp", w.prob_clamp}, {"theta_c", w.theta_c},     {"theta_m", w.theta_m},
          {"topk", w.topk},             {"thresholds", w.thresholds}, {"boundary_band", w.boundary_band}};
}

inline void from_json(const json& j, LossWeights& w, const std::string& where = "loss") {
  detail::ObjectReader r(j, where);
  r.get("lambda1", w.lambda1);
  r.get("lambda2", w.lambda2);
  r.get("gamma", w.gamma);
  r.get("alpha", w.alpha);
  r.get("beta", w.beta);
  r.get("delta", w.delta);
  r.get("erosion_kernel", w.erosion_kernel);
  r.get("eps", w.eps);
  r.get("overlap_tau", w.overlap_tau);
  r.get("prob_clamp", w.prob_clamp);
  r.get("theta_c", w.theta_c);
  r.get("theta_m", w.theta_m);
  r.get("topk", w.topk);
  r.get("thresholds", w.thresholds);
  r.get("boundary_band", w.boundary_band);
  r.finish();
}

// InferenceConfig -----------------------------------------------------------

inline json to_json(const InferenceConfig& c) {
  return {{"thresholds", c.thresholds}, {"theta_c", c.theta_c},   {"nms_sigma", c.nms_sigma},
          {"score_floor", c.score_floor}, {"max_keep", c.max_keep}, {"class_agnostic", c.class_agnostic}};
}

inline void from_json(const json& j, InferenceConfig& c, const std::string& where = "inference") {
  detail::ObjectReader r(j, where);
  r.get("thresholds", c.thresholds);
  r.get("theta_c", c.theta_c);
  r.get("nms_sigma", c.nms_sigma);
  r.get("score_floor", c.score_floor);
  r.get("max_keep", c.max_keep);
  r.get("class_agnostic", c.class_agnostic);
  r.finish();
}

// TrainConfig ---------------------------------------------------------------

inline json to_json(const TrainConfig& c) {
  return {{"train",
           {{"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_eps", c.adam_eps},
            {"batch_size", c.batch_size},
            {"seed", c.seed}}},
          {"model", to_json(c.model)},
          {"loss", to_json(c.loss)}};
}

inline void train_fields_from_json(const json& j, TrainConfig& c, const std::string& where = "train") {
  detail::ObjectReader r(j, where);
  r.get("epochs", c.epochs);
  r.get("learning_rate", c.learning_rate);
  r.get("adam_beta1", c.adam_beta1);
  r.get("adam_beta2", c.adam_beta2);
  r.get("adam_eps", c.adam_eps);
  r.get("batch_size", c.batch_size);
  r.get("seed", c.seed);
  r.finish();
}

inline void from_json(const json& j, TrainConfig& c) {
  detail::ObjectReader r(j, "config");
  if (const json* t = r.child("train")) train_fields_from_json(*t, c);
  if (const json* m = r.child("model")) from_json(*m, c.model);
  if (const json* l = r.child("loss")) from_json(*l, c.loss);
  r.finish();
}

// RunConfig -----------------------------------------------------------------

struct RunPaths {
  std::string data;
  std::string out;
  std::string checkpoint;
};

/// Everything a CLI run needs; loaded from --config, then overridden by flags.
struct RunConfig {
  TrainConfig train;
  InferenceConfig inference;
  RunPaths paths;
  std::size_t workers = 1;

  void validate() const {
    train.validate();
    inference.validate();
    if (workers < 1) throw ValidationError("workers must be >= 1");
  }
};

inline json to_json(const RunConfig& c) {
  json j = to_json(c.train);
  j["inference"] = to_json(c.inference);
  j["paths"] = {{"data", c.paths.data}, {"out", c.paths.out}, {"checkpoint", c.paths.checkpoint}};
  j["workers"] = c.workers;
  return j;
}

inline RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  detail::ObjectReader r(j, "config");
  if (const json* t = r.child("train")) train_fields_from_json(*t, c.train);
  if (const json* m = r.child("model")) from_json(*m, c.train.model);
  if (const json* l = r.child("loss")) from_json(*l, c.train.loss);
  if (const json* i = r.child("inference")) from_json(*i, c.inference);
  if (const json* p = r.child("paths")) {
    detail::ObjectReader pr(*p, "config.paths");
    pr.get("data", c.paths.data);
    pr.get("out", c.paths.out);
    pr.get("checkpoint", c.paths.checkpoint);
    pr.finish();
  }
  r.get("workers", c.workers);
  r.finish();
  return c;
}

}  // namespace tags
