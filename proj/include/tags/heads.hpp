#pragma once

// Parallel detection heads on E^s (T^s x C, time-major):
//  - classification: one temporal conv to K+1 logits; P = softmax over
//    classes per snippet, R = sigmoid(logits)
//  - global mask: conv-ReLU-conv-ReLU-conv with T^s output channels, then
//    sigmoid. Output row t of the conv stack is mask column t.

#include <string>
#include <utility>

#include "tags/autodiff.hpp"
#include "tags/encoder.hpp"
#include "tags/model_config.hpp"
#include "tags/params.hpp"

namespace tags {

/// Per-scale predictions in the conventional orientation.
struct ScaleOutputs {
  std::size_t scale = 1;
  Matrix probs;      // (K+1) x T^s, column-stochastic
  Matrix regress;    // (K+1) x T^s, per-class sigmoid scores
  Matrix masks;      // T^s x T^s, column t = global mask predicted at snippet t
  Matrix embedding;  // T^s x C

  std::size_t length() const { return masks.cols(); }
};

/// Time-major logits, T^s x (K+1).
inline ad::Var class_logits(const BoundParams& p, const ModelConfig& cfg, const ad::Var& embedding, std::size_t s) {
  const std::string pre = scale_prefix("heads", s);
  return ad::conv1d_same(embedding, p[pre + "cls.w"], p[pre + "cls.b"], cfg.kernel_width);
}

/// Sigmoid mask scores, time-major: row t holds mask column t.
inline ad::Var mask_rows(const BoundParams& p, const ModelConfig& cfg, const ad::Var& embedding, std::size_t s) {
  const std::string pre = scale_prefix("heads", s);
  const std::size_t w = cfg.kernel_width;
  ad::Var h = ad::relu(ad::conv1d_same(embedding, p[pre + "mask1.w"], p[pre + "mask1.b"], w));
  h = ad::relu(ad::conv1d_same(h, p[pre + "mask2.w"], p[pre + "mask2.b"], w));
  return ad::sigmoid(ad::conv1d_same(h, p[pre + "mask3.w"], p[pre + "mask3.b"], w));
}

/// Column-wise softmax of time-major logits, returned as (K+1) x T.
inline Matrix probs_from_logits(const Matrix& logits_tm) {
  return ad::softmax_rows_values(logits_tm).transposed();
}

inline Matrix regress_from_logits(const Matrix& logits_tm) {
  Matrix r = logits_tm.transposed();
  for (double& v : r.flat()) v = 1.0 / (1.0 + std::exp(-v));
  return r;
}

/// Plain classification branch: returns (P, R), both (K+1) x T.
inline std::pair<Matrix, Matrix> classify(const Matrix& embedding, const Matrix& weight, const Matrix& bias,
                                          std::size_t kernel_width = 3) {
  if (!embedding.all_finite()) throw ValidationError("classify: non-finite embedding");
  ad::Tape tape;
  ad::Var logits = ad::conv1d_same(tape.constant(embedding), tape.constant(weight), tape.constant(bias), kernel_width);
  return {probs_from_logits(logits.value()), regress_from_logits(logits.value())};
}

struct MaskHeadWeights {
  Matrix w1, b1, w2, b2, w3, b3;
};

/// Plain mask branch: returns M (T x T), column t = mask for snippet t.
inline Matrix predict_masks(const Matrix& embedding, const MaskHeadWeights& w, std::size_t kernel_width = 3) {
  if (!embedding.all_finite()) throw ValidationError("predict_masks: non-finite embedding");
  if (w.w3.cols() != embedding.rows())
    throw ValidationError("predict_masks: final layer emits " + std::to_string(w.w3.cols()) + " channels for " +
                          std::to_string(embedding.rows()) + " snippets");
  ad::Tape tape;
  auto c = [&](const Matrix& m) { return tape.constant(m); };
  ad::Var h = ad::relu(ad::conv1d_same(c(embedding), c(w.w1), c(w.b1), kernel_width));
  h = ad::relu(ad::conv1d_same(h, c(w.w2), c(w.b2), kernel_width));
  return ad::sigmoid(ad::conv1d_same(h, c(w.w3), c(w.b3), kernel_width)).value().transposed();
}

}  // namespace tags
