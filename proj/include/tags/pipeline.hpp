#pragma once

// Dataset-level glue between the model, inference and the annotation types.

#include <string>

#include "tags/inference.hpp"
#include "tags/model.hpp"
#include "tags/synthetic.hpp"

namespace tags {

/// Videos of `subset`, keeping the full class vocabulary.
inline Dataset select_subset(const Dataset& data, const std::string& subset) {
  Dataset out;
  out.annotations.version = data.annotations.version;
  out.annotations.classes = data.annotations.classes;
  for (const auto& seq : data.features) {
    const auto& ann = data.annotations.videos.at(seq.video_id);
    if (!subset.empty() && ann.subset != subset) continue;
    out.annotations.videos.emplace(seq.video_id, ann);
    out.features.push_back(seq);
  }
  return out;
}

inline std::vector<Detection> predict_video(const ParamTable& params, const ModelConfig& model,
                                            const InferenceConfig& infer, const FeatureSequence& seq,
                                            const std::vector<std::string>& classes) {
  const VideoMeta meta{seq.video_id, seq.duration_s, seq.length()};
  return to_detections(detect(forward(params, model, seq.values), infer, meta), classes);
}

inline PredictionSet predict_dataset(const ParamTable& params, const ModelConfig& model, const InferenceConfig& infer,
                                     const Dataset& data) {
  infer.validate();
  PredictionSet out;
  for (const auto& seq : data.features)
    out[seq.video_id] = predict_video(params, model, infer, seq, data.annotations.classes);
  return out;
}

}  // namespace tags
