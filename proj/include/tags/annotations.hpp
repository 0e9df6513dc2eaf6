#pragma once

// ActivityNet-style annotation and prediction JSON.
//
// Annotations:
//   {"version": "1.0", "classes": [...],
//    "database": {"<id>": {"duration": s, "subset": "train|val|test",
//                          "annotations": [{"segment": [a, b], "label": "c"}]}}}
// Predictions:
//   {"results": {"<id>": [{"label": "c", "score": x, "segment": [a, b]}]}}

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "tags/errors.hpp"
#include "tags/features.hpp"

namespace tags {

struct Instance {
  double start_s = 0.0;
  double end_s = 0.0;
  std::string label;

  friend bool operator==(const Instance&, const Instance&) = default;
};

struct VideoAnnotation {
  double duration_s = 0.0;
  std::string subset = "train";
  std::vector<Instance> instances;

  friend bool operator==(const VideoAnnotation&, const VideoAnnotation&) = default;
};

struct AnnotationSet {
  std::string version = "1.0";
  std::vector<std::string> classes;
  std::map<std::string, VideoAnnotation> videos;

  std::optional<std::size_t> class_index(const std::string& label) const {
    auto it = std::find(classes.begin(), classes.end(), label);
    if (it == classes.end()) return std::nullopt;
    return static_cast<std::size_t>(it - classes.begin());
  }

  std::size_t num_classes() const { return classes.size(); }

  std::vector<std::string> video_ids(const std::string& subset = "") const {
    std::vector<std::string> ids;
    for (const auto& [id, v] : videos)
      if (subset.empty() || v.subset == subset) ids.push_back(id);
    return ids;
  }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& c : classes)
      if (!seen.insert(c).second) throw ValidationError("duplicate class '" + c + "' in vocabulary");
    for (const auto& [id, v] : videos) {
      if (!(v.duration_s > 0.0) || !std::isfinite(v.duration_s))
        throw ValidationError("video '" + id + "': duration must be positive");
      for (const auto& inst : v.instances) {
        if (!(inst.start_s >= 0.0 && inst.start_s < inst.end_s && inst.end_s <= v.duration_s)) {
          throw ValidationError("video '" + id + "': segment [" + std::to_string(inst.start_s) + ", " +
                                std::to_string(inst.end_s) + "] violates 0 <= start < end <= duration (" +
                                std::to_string(v.duration_s) + ")");
        }
        if (!class_index(inst.label))
          throw ValidationError("video '" + id + "': label '" + inst.label + "' not in class vocabulary");
      }
    }
  }

  friend bool operator==(const AnnotationSet&, const AnnotationSet&) = default;
};

struct Detection {
  std::string label;
  double score = 0.0;
  double start_s = 0.0;
  double end_s = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Per-video detections; videos with no detections keep an empty list.
using PredictionSet = std::map<std::string, std::vector<Detection>>;

namespace detail {

using nlohmann::json;

inline const json& require_field(const json& obj, const char* field, const std::string& where) {
  if (!obj.is_object() || !obj.contains(field))
    throw FormatError(FormatErrorKind::kParse, where + ": missing required field \"" + field + "\"");
  return obj.at(field);
}

inline double require_number(const json& obj, const char* field, const std::string& where) {
  const json& v = require_field(obj, field, where);
  if (!v.is_number()) throw FormatError(FormatErrorKind::kParse, where + ": field \"" + field + "\" must be a number");
  return v.get<double>();
}

inline std::string require_string(const json& obj, const char* field, const std::string& where) {
  const json& v = require_field(obj, field, where);
  if (!v.is_string()) throw FormatError(FormatErrorKind::kParse, where + ": field \"" + field + "\" must be a string");
  return v.get<std::string>();
}

inline std::pair<double, double> require_segment(const json& obj, const std::string& where) {
  const json& seg = require_field(obj, "segment", where);
  if (!seg.is_array() || seg.size() != 2 || !seg[0].is_number() || !seg[1].is_number())
    throw FormatError(FormatErrorKind::kParse, where + ": \"segment\" must be [start, end]");
  return {seg[0].get<double>(), seg[1].get<double>()};
}

inline json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(FormatErrorKind::kParse, where + ": " + e.what());
  }
}

inline std::string normalize_subset(const std::string& s, const std::string& where) {
  if (s == "train" || s == "training") return "train";
  if (s == "val" || s == "validation") return "val";
  if (s == "test" || s == "testing") return "test";
  throw ValidationError(where + ": unknown subset '" + s + "'");
}

}  // namespace detail

inline AnnotationSet parse_annotations(const std::string& text, const std::string& where = "annotations") {
  using detail::json;
  const json doc = detail::parse_json(text, where);
  AnnotationSet set;
  if (doc.contains("version") && doc["version"].is_string()) set.version = doc["version"].get<std::string>();
  const json& db = detail::require_field(doc, "database", where);
  if (!db.is_object()) throw FormatError(FormatErrorKind::kParse, where + ": \"database\" must be an object");
  std::set<std::string> labels;
  for (const auto& [id, v] : db.items()) {
    const std::string vw = where + ": video '" + id + "'";
    VideoAnnotation va;
    va.duration_s = detail::require_number(v, "duration", vw);
    if (v.contains("subset")) va.subset = detail::normalize_subset(detail::require_string(v, "subset", vw), vw);
    const json& anns = detail::require_field(v, "annotations", vw);
    if (!anns.is_array()) throw FormatError(FormatErrorKind::kParse, vw + ": \"annotations\" must be an array");
    for (const json& a : anns) {
      auto [s, e] = detail::require_segment(a, vw);
      va.instances.push_back(Instance{s, e, detail::require_string(a, "label", vw)});
      labels.insert(va.instances.back().label);
    }
    set.videos.emplace(id, std::move(va));
  }
  if (doc.contains("classes")) {
    const json& cls = doc["classes"];
    if (!cls.is_array()) throw FormatError(FormatErrorKind::kParse, where + ": \"classes\" must be an array");
    for (const json& c : cls) {
      if (!c.is_string()) throw FormatError(FormatErrorKind::kParse, where + ": class names must be strings");
      set.classes.push_back(c.get<std::string>());
    }
  } else {
    set.classes.assign(labels.begin(), labels.end());
  }
  set.validate();
  return set;
}

inline AnnotationSet read_annotations(const std::filesystem::path& path) {
  return parse_annotations(read_file(path), path.string());
}

inline std::string dump_annotations(const AnnotationSet& set) {
  using detail::json;
  set.validate();
  json db = json::object();
  for (const auto& [id, v] : set.videos) {
    json anns = json::array();
    for (const auto& inst : v.instances)
      anns.push_back({{"segment", {inst.start_s, inst.end_s}}, {"label", inst.label}});
    db[id] = {{"duration", v.duration_s}, {"subset", v.subset}, {"annotations", std::move(anns)}};
  }
  json doc = {{"version", set.version}, {"classes", set.classes}, {"database", std::move(db)}};
  return doc.dump(1) + "\n";
}

inline void write_annotations(const AnnotationSet& set, const std::filesystem::path& path) {
  write_file(path, dump_annotations(set));
}

inline std::string dump_predictions(const PredictionSet& preds) {
  using detail::json;
  json results = json::object();
  for (const auto& [id, dets] : preds) {
    json list = json::array();
    for (const auto& d : dets) list.push_back({{"label", d.label}, {"score", d.score}, {"segment", {d.start_s, d.end_s}}});
    results[id] = std::move(list);
  }
  return json{{"results", std::move(results)}}.dump(1) + "\n";
}

inline void write_predictions(const PredictionSet& preds, const std::filesystem::path& path) {
  write_file(path, dump_predictions(preds));
}

inline PredictionSet parse_predictions(const std::string& text, const std::string& where = "predictions") {
  using detail::json;
  const json doc = detail::parse_json(text, where);
  const json& results = detail::require_field(doc, "results", where);
  if (!results.is_object()) throw FormatError(FormatErrorKind::kParse, where + ": \"results\" must be an object");
  PredictionSet preds;
  for (const auto& [id, list] : results.items()) {
    const std::string vw = where + ": video '" + id + "'";
    if (!list.is_array()) throw FormatError(FormatErrorKind::kParse, vw + ": results must be an array");
    auto& out = preds[id];
    for (const json& d : list) {
      auto [s, e] = detail::require_segment(d, vw);
      out.push_back(Detection{detail::require_string(d, "label", vw), detail::require_number(d, "score", vw), s, e});
    }
  }
  return preds;
}

inline PredictionSet read_predictions(const std::filesystem::path& path) {
  return parse_predictions(read_file(path), path.string());
}

}  // namespace tags
