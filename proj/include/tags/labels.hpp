#pragma once

// Ground-truth construction for one video at one temporal scale. A scale-s
// snippet t spans base interval [t*s*D, (t+1)*s*D) with D = duration / T and
// belongs to an instance iff its center lies in [start, end]. Its mask
// column marks every snippet whose center lies in that same instance.

#include <algorithm>
#include <string>
#include <vector>

#include "tags/annotations.hpp"
#include "tags/errors.hpp"
#include "tags/matrix.hpp"

namespace tags {

struct ScaleTargets {
  std::size_t scale = 1;
  std::size_t num_classes = 0;  // K; label K is background
  std::vector<int> labels;      // length T^s
  std::vector<int> instance;    // length T^s, -1 for background
  Matrix masks;                 // T^s x T^s binary, column t = mask of snippet t

  std::size_t length() const { return labels.size(); }
  bool is_foreground(std::size_t t) const { return instance[t] >= 0; }
  int background() const { return static_cast<int>(num_classes); }

  /// Mask column t as a contiguous vector.
  std::vector<double> mask(std::size_t t) const { return masks.col(t); }

  std::vector<std::size_t> foreground() const {
    std::vector<std::size_t> fg;
    for (std::size_t t = 0; t < length(); ++t)
      if (is_foreground(t)) fg.push_back(t);
    return fg;
  }
};

inline double snippet_center(std::size_t t, std::size_t scale, double base_step) {
  return (static_cast<double>(t) + 0.5) * static_cast<double>(scale) * base_step;
}

inline ScaleTargets assign_targets(const VideoAnnotation& video, std::size_t snippets, std::size_t scale,
                                   const std::vector<std::string>& classes) {
  if (snippets < 1 || scale < 1) throw ValidationError("assign_targets: snippets and scale must be >= 1");
  std::vector<Instance> sorted = video.instances;
  std::sort(sorted.begin(), sorted.end(),
            [](const Instance& a, const Instance& b) { return a.start_s < b.start_s; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].start_s < sorted[i - 1].end_s) {
      throw ValidationError("assign_targets: instances [" + std::to_string(sorted[i - 1].start_s) + ", " +
                            std::to_string(sorted[i - 1].end_s) + "] and [" + std::to_string(sorted[i].start_s) +
                            ", " + std::to_string(sorted[i].end_s) + "] overlap");
    }
  }

  const std::size_t Ts = (snippets + scale - 1) / scale;
  const double step = video.duration_s / static_cast<double>(snippets);
  ScaleTargets out;
  out.scale = scale;
  out.num_classes = classes.size();
  out.labels.assign(Ts, static_cast<int>(classes.size()));
  out.instance.assign(Ts, -1);
  out.masks = Matrix(Ts, Ts);

  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const Instance& inst = sorted[i];
    auto it = std::find(classes.begin(), classes.end(), inst.label);
    if (it == classes.end()) throw ValidationError("assign_targets: label '" + inst.label + "' not in vocabulary");
    const int label = static_cast<int>(it - classes.begin());
    std::vector<std::size_t> members;
    for (std::size_t t = 0; t < Ts; ++t) {
      const double c = snippet_center(t, scale, step);
      if (c >= inst.start_s && c <= inst.end_s && out.instance[t] < 0) members.push_back(t);
    }
    for (std::size_t t : members) {
      out.labels[t] = label;
      out.instance[t] = static_cast<int>(i);
      for (std::size_t r : members) out.masks(r, t) = 1.0;
    }
  }
  return out;
}

}  // namespace tags
