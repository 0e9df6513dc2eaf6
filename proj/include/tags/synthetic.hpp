#pragma once

// Seeded synthetic videos with planted, non-overlapping action instances,
// plus the on-disk dataset layout:
//   <dir>/annotations.json
//   <dir>/features/<video_id>.tagf

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tags/annotations.hpp"
#include "tags/errors.hpp"
#include "tags/features.hpp"

namespace tags {

struct SyntheticSpec {
  int num_videos = 20;
  int num_val_videos = 0;  // generated after the training videos, subset "val"
  int num_classes = 3;
  int snippets = 64;
  int dim = 16;
  double noise_sigma = 0.1;
  int min_len = 8;
  int max_len = 16;
  int max_instances = 3;
  int min_gap = 2;
  double snippet_seconds = 1.0;
  std::uint64_t seed = 7;

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw ValidationError("synthetic spec: " + what);
    };
    need(num_videos >= 1, "num_videos must be >= 1");
    need(num_val_videos >= 0, "num_val_videos must be >= 0");
    need(num_classes >= 1, "num_classes must be >= 1");
    need(snippets >= 1 && dim >= 1, "snippets and dim must be >= 1");
    need(max_instances >= 1, "max_instances must be >= 1");
    need(min_gap >= 1, "min_gap must be >= 1");
    need(noise_sigma >= 0.0, "noise_sigma must be >= 0");
    need(snippet_seconds > 0.0, "snippet_seconds must be > 0");
    need(0 < min_len && min_len <= max_len && max_len < snippets, "need 0 < min_len <= max_len < snippets");
    const long worst = static_cast<long>(max_instances) * max_len + static_cast<long>(max_instances - 1) * min_gap;
    if (worst > snippets) {
      throw ValidationError("synthetic spec infeasible: " + std::to_string(max_instances) + " instances x " +
                            std::to_string(max_len) + " snippets + " + std::to_string(max_instances - 1) + " gaps x " +
                            std::to_string(min_gap) + " = " + std::to_string(worst) + " > " +
                            std::to_string(snippets) + " snippets");
    }
  }
};

struct Dataset {
  AnnotationSet annotations;
  std::vector<FeatureSequence> features;  // ordered by video id
};

/// Planted instance in snippet units: [start, start + length).
struct PlantedInstance {
  int start = 0;
  int length = 0;
  int label = 0;
};

inline std::vector<double> random_unit_vector(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = normal(rng);
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

inline std::string synthetic_video_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "video_%04d", index);
  return buf;
}

inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);

  std::vector<std::vector<double>> prototypes;  // classes 0..K-1, then background
  for (int c = 0; c <= spec.num_classes; ++c) prototypes.push_back(random_unit_vector(rng, spec.dim));
  const auto& background = prototypes.back();

  Dataset data;
  for (int c = 0; c < spec.num_classes; ++c) data.annotations.classes.push_back("class_" + std::to_string(c));

  std::normal_distribution<double> noise(0.0, 1.0);
  const int total = spec.num_videos + spec.num_val_videos;
  for (int v = 0; v < total; ++v) {
    const int count = std::uniform_int_distribution<int>(1, spec.max_instances)(rng);
    std::vector<PlantedInstance> planted(static_cast<std::size_t>(count));
    int used = 0;
    for (auto& p : planted) {
      p.length = std::uniform_int_distribution<int>(spec.min_len, spec.max_len)(rng);
      p.label = std::uniform_int_distribution<int>(0, spec.num_classes - 1)(rng);
      used += p.length;
    }
    const int slack = spec.snippets - used - (count - 1) * spec.min_gap;
    std::vector<int> cuts(static_cast<std::size_t>(count));
    for (int& c : cuts) c = std::uniform_int_distribution<int>(0, slack)(rng);
    std::sort(cuts.begin(), cuts.end());
    int cursor = 0, prev_cut = 0;
    for (int i = 0; i < count; ++i) {
      cursor += cuts[static_cast<std::size_t>(i)] - prev_cut + (i > 0 ? spec.min_gap : 0);
      prev_cut = cuts[static_cast<std::size_t>(i)];
      planted[static_cast<std::size_t>(i)].start = cursor;
      cursor += planted[static_cast<std::size_t>(i)].length;
    }

    FeatureSequence seq;
    seq.video_id = synthetic_video_id(v);
    seq.duration_s = spec.snippets * spec.snippet_seconds;
    seq.values = Matrix(static_cast<std::size_t>(spec.snippets), static_cast<std::size_t>(spec.dim));
    std::vector<const std::vector<double>*> owner(static_cast<std::size_t>(spec.snippets), &background);
    VideoAnnotation ann;
    ann.duration_s = seq.duration_s;
    ann.subset = v < spec.num_videos ? "train" : "val";
    for (const auto& p : planted) {
      for (int t = p.start; t < p.start + p.length; ++t)
        owner[static_cast<std::size_t>(t)] = &prototypes[static_cast<std::size_t>(p.label)];
      ann.instances.push_back(Instance{p.start * spec.snippet_seconds, (p.start + p.length) * spec.snippet_seconds,
                                       data.annotations.classes[static_cast<std::size_t>(p.label)]});
    }
    for (int t = 0; t < spec.snippets; ++t) {
      const auto& proto = *owner[static_cast<std::size_t>(t)];
      for (int d = 0; d < spec.dim; ++d) {
        seq.values(static_cast<std::size_t>(t), static_cast<std::size_t>(d)) =
            proto[static_cast<std::size_t>(d)] + (spec.noise_sigma > 0.0 ? spec.noise_sigma * noise(rng) : 0.0);
      }
    }
    round_to_float(seq.values);
    data.annotations.videos.emplace(seq.video_id, std::move(ann));
    data.features.push_back(std::move(seq));
  }
  data.annotations.validate();
  return data;
}

inline void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  write_annotations(data.annotations, dir / "annotations.json");
  for (const auto& seq : data.features) write_features(seq, dir / "features" / (seq.video_id + ".tagf"));
}

/// Loads the annotation file and the feature file of every annotated video
/// in `subset` (all videos when empty).
inline Dataset load_dataset_files(const std::filesystem::path& annotations_path,
                                  const std::filesystem::path& features_dir, const std::string& subset = "") {
  Dataset data;
  data.annotations = read_annotations(annotations_path);
  for (const auto& id : data.annotations.video_ids(subset)) {
    data.features.push_back(
        read_features(features_dir / (id + ".tagf"), data.annotations.videos.at(id).duration_s));
  }
  return data;
}

inline Dataset load_dataset(const std::filesystem::path& dir, const std::string& subset = "") {
  return load_dataset_files(dir / "annotations.json", dir / "features", subset);
}

}  // namespace tags
