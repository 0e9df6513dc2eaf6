#pragma once

// Training objective. Every term returns its value together with the
// gradient with respect to its differentiable inputs; the trainer splices
// these into the tape as fused scalar nodes.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tags/autodiff.hpp"
#include "tags/errors.hpp"
#include "tags/labels.hpp"
#include "tags/matrix.hpp"

namespace tags {

/// Mask thresholds {0.10, 0.15, ..., 0.90}.
inline std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 16; ++i) t.push_back(static_cast<double>(10 + 5 * i) / 100.0);
  return t;
}

struct LossWeights {
  double lambda1 = 0.4;       // focal vs. regression trade-off
  double lambda2 = 0.4;       // dice weight
  double gamma = 2.0;         // focal degree
  double alpha = 10.0;        // hard-negative weight
  double beta = 2.0;          // promotion exponent
  double delta = 0.25;        // outer-inner contrast flank ratio
  std::size_t erosion_kernel = 7;
  double eps = 1e-8;
  double overlap_tau = 1e-6;  // below this soft intersection the L2 fallback applies
  double prob_clamp = 1e-7;
  double theta_c = 0.3;
  double theta_m = 0.5;
  std::size_t topk = 40;
  std::vector<double> thresholds = default_thresholds();
  bool boundary_band = false;  // compare m - erode(m) instead of erode(m)

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw ValidationError("loss weights: " + what);
    };
    need(lambda1 > 0.0 && lambda1 < 1.0, "lambda1 must be in (0,1)");
    need(lambda2 > 0.0 && lambda2 < 1.0, "lambda2 must be in (0,1)");
    need(gamma >= 0.0 && beta >= 0.0, "gamma and beta must be >= 0");
    need(alpha >= 0.0 && delta >= 0.0, "alpha and delta must be >= 0");
    need(erosion_kernel % 2 == 1, "erosion kernel must be odd");
    need(eps > 0.0 && prob_clamp > 0.0 && prob_clamp < 0.5, "eps/prob_clamp out of range");
    need(theta_c > 0.0 && theta_c < 1.0 && theta_m > 0.0 && theta_m < 1.0, "theta_c/theta_m must be in (0,1)");
    need(topk >= 1, "topk must be >= 1");
    need(!thresholds.empty(), "threshold set must be nonempty");
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      need(thresholds[i] > 0.0 && thresholds[i] < 1.0, "thresholds must lie in (0,1)");
      need(i == 0 || thresholds[i] > thresholds[i - 1], "thresholds must be strictly increasing");
    }
  }

  /// |N| = ceil(K/10), at least one.
  static std::size_t hard_negative_count(std::size_t num_classes) {
    return std::max<std::size_t>(1, (num_classes + 9) / 10);
  }
};

// ---------------------------------------------------------------------------
// Classification

struct ClassificationTerm {
  double value = 0.0;
  std::vector<double> dlogits;
};

/// Indices of the `count` highest entries of r, excluding `label`; ties
/// resolve to the lower index.
inline std::vector<std::size_t> hard_negatives(std::span<const double> r, std::size_t label, std::size_t count) {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < r.size(); ++k)
    if (k != label) idx.push_back(k);
  count = std::min(count, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(count), idx.end(),
                    [&](std::size_t a, std::size_t b) { return r[a] > r[b] || (r[a] == r[b] && a < b); });
  idx.resize(count);
  return idx;
}

/// Focal cross-entropy on softmax probabilities p plus class-balanced
/// logistic regression on sigmoid scores r, for one snippet.
inline double classification_loss(std::span<const double> p, std::span<const double> r, std::size_t label,
                                  const LossWeights& w) {
  if (p.size() != r.size() || label >= p.size()) throw ValidationError("classification_loss: label out of range");
  const double lo = w.prob_clamp, hi = 1.0 - w.prob_clamp;
  const double py = std::clamp(p[label], lo, hi);
  const double focal = std::pow(1.0 - py, w.gamma) * -std::log(py);
  const auto neg = hard_negatives(r, label, LossWeights::hard_negative_count(p.size() - 1));
  double neg_sum = 0.0;
  for (std::size_t k : neg) neg_sum += std::log(1.0 - std::clamp(r[k], lo, hi));
  const double reg = -std::log(std::clamp(r[label], lo, hi)) -
                     (neg.empty() ? 0.0 : w.alpha / static_cast<double>(neg.size()) * neg_sum);
  return w.lambda1 * focal + (1.0 - w.lambda1) * reg;
}

/// Same loss as a function of the K+1 raw logits, with its gradient.
inline ClassificationTerm classification_loss_logits(std::span<const double> logits, std::size_t label,
                                                     const LossWeights& w) {
  const std::size_t n = logits.size();
  if (label >= n) throw ValidationError("classification_loss: label out of range");
  std::vector<double> p(n), r(n);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t k = 0; k < n; ++k) z += (p[k] = std::exp(logits[k] - mx));
  for (std::size_t k = 0; k < n; ++k) {
    p[k] /= z;
    r[k] = 1.0 / (1.0 + std::exp(-logits[k]));
  }
  ClassificationTerm out;
  out.value = classification_loss(p, r, label, w);
  out.dlogits.assign(n, 0.0);

  const double lo = w.prob_clamp, hi = 1.0 - w.prob_clamp;
  auto unclamped = [&](double v) { return v > lo && v < hi; };

  // focal part through the softmax
  const double py = p[label];
  if (unclamped(py)) {
    const double om = 1.0 - py;
    double dfocal = -std::pow(om, w.gamma) / py;
    if (w.gamma != 0.0) dfocal += w.gamma * std::pow(om, w.gamma - 1.0) * std::log(py);
    const double s = w.lambda1 * dfocal;
    for (std::size_t j = 0; j < n; ++j) out.dlogits[j] += s * py * ((j == label ? 1.0 : 0.0) - p[j]);
  }
  // regression part through the sigmoid
  const double wr = 1.0 - w.lambda1;
  if (unclamped(r[label])) out.dlogits[label] += wr * -(1.0 - r[label]);
  const auto neg = hard_negatives(r, label, LossWeights::hard_negative_count(n - 1));
  for (std::size_t k : neg) {
    if (!unclamped(r[k])) continue;
    out.dlogits[k] += wr * w.alpha / static_cast<double>(neg.size()) * r[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Morphology

struct Erosion {
  std::vector<double> values;
  std::vector<long> source;  // index selected by the min, -1 for zero padding
};

/// Sliding-window minimum of odd width k with zero padding at both ends.
inline Erosion erode_with_source(std::span<const double> m, std::size_t k) {
  if (k % 2 == 0) throw ValidationError("erode: kernel must be odd");
  const long n = static_cast<long>(m.size());
  const long half = static_cast<long>(k / 2);
  Erosion out{std::vector<double>(m.size()), std::vector<long>(m.size(), -1)};
  for (long i = 0; i < n; ++i) {
    double best;
    long src;
    if (i - half < 0 || i + half >= n) {
      best = 0.0;
      src = -1;
    } else {
      best = m[static_cast<std::size_t>(i - half)];
      src = i - half;
    }
    for (long j = std::max(0L, i - half); j <= std::min(n - 1, i + half); ++j) {
      if (m[static_cast<std::size_t>(j)] < best) {
        best = m[static_cast<std::size_t>(j)];
        src = j;
      }
    }
    out.values[static_cast<std::size_t>(i)] = best;
    out.source[static_cast<std::size_t>(i)] = src;
  }
  return out;
}

inline std::vector<double> erode(std::span<const double> m, std::size_t k) { return erode_with_source(m, k).values; }

// ---------------------------------------------------------------------------
// Mask loss: boundary IoU on eroded masks, L2 fallback without overlap, dice.

struct MaskTerm {
  double value = 0.0;
  bool fallback = false;
  std::vector<double> dm;
};

inline MaskTerm mask_loss_with_grad(std::span<const double> m, std::span<const double> g, const LossWeights& w) {
  const std::size_t n = m.size();
  if (g.size() != n) throw ValidationError("mask_loss: length mismatch");
  double c = 0.0;
  for (double v : g) c += v;
  if (c <= 0.0) throw ValidationError("mask_loss: ground-truth mask has no foreground");

  const Erosion em = erode_with_source(m, w.erosion_kernel);
  const Erosion eg = erode_with_source(g, w.erosion_kernel);
  std::vector<double> a = em.values, b = eg.values;
  if (w.boundary_band) {
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = m[i] - a[i];
      b[i] = g[i] - b[i];
    }
  }
  double inter = 0.0, uni = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    inter += a[i] * b[i];
    uni += a[i] + b[i] - a[i] * b[i];
  }

  MaskTerm out;
  out.dm.assign(n, 0.0);
  if (inter > w.overlap_tau) {
    const double den = uni + w.eps;
    out.value = 1.0 - inter / den;
    std::vector<double> da(n);
    for (std::size_t i = 0; i < n; ++i) da[i] = -(b[i] * den - inter * (1.0 - b[i])) / (den * den);
    for (std::size_t i = 0; i < n; ++i) {
      if (w.boundary_band) out.dm[i] += da[i];
      const long src = em.source[i];
      if (src >= 0) out.dm[static_cast<std::size_t>(src)] += w.boundary_band ? -da[i] : da[i];
    }
  } else {
    out.fallback = true;
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) sq += (m[i] - g[i]) * (m[i] - g[i]);
    const double norm = std::sqrt(sq);
    out.value = norm / c;
    if (norm > 0.0)
      for (std::size_t i = 0; i < n; ++i) out.dm[i] += (m[i] - g[i]) / (norm * c);
  }

  double mg = 0.0, den = w.eps;
  for (std::size_t i = 0; i < n; ++i) {
    mg += m[i] * g[i];
    den += m[i] * m[i] + g[i] * g[i];
  }
  const double dice = 2.0 * mg / den;
  out.value += w.lambda2 * (1.0 - dice);
  for (std::size_t i = 0; i < n; ++i) out.dm[i] -= w.lambda2 * (2.0 * g[i] / den - 2.0 * mg * 2.0 * m[i] / (den * den));
  return out;
}

inline double mask_loss(std::span<const double> m, std::span<const double> g, const LossWeights& w) {
  return mask_loss_with_grad(m, g, w).value;
}

// ---------------------------------------------------------------------------
// Segments and outer-inner contrast

struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  bool foreground = false;

  std::size_t length() const { return end - start + 1; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

using SegmentList = std::vector<Segment>;

/// Maximal runs of [m >= theta] tiling [0, T-1].
inline SegmentList binarize_segments(std::span<const double> m, double theta) {
  SegmentList out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const bool z = m[i] >= theta;
    if (out.empty() || out.back().foreground != z) {
      out.push_back(Segment{i, i, z});
    } else {
      out.back().end = i;
    }
  }
  return out;
}

namespace detail {

/// Calls visit(position, weight) for every (position, dR/du) pair of one
/// segment's contribution inside - outside; returns the contribution.
template <typename Visit>
double oic_segment(std::span<const double> m, const Segment& seg, double delta, Visit&& visit) {
  auto u = [&](std::size_t r) { return seg.foreground ? m[r] : 1.0 - m[r]; };
  const std::size_t l = seg.length();
  double inside = 0.0;
  for (std::size_t r = seg.start; r <= seg.end; ++r) inside += u(r);
  inside /= static_cast<double>(l);
  const long flank = static_cast<long>(std::ceil(delta * static_cast<double>(l)));
  const long n = static_cast<long>(m.size());
  std::vector<std::size_t> outer;
  for (long r = static_cast<long>(seg.start) - flank; r < static_cast<long>(seg.start); ++r)
    if (r >= 0) outer.push_back(static_cast<std::size_t>(r));
  for (long r = static_cast<long>(seg.end) + 1; r <= static_cast<long>(seg.end) + flank; ++r)
    if (r < n) outer.push_back(static_cast<std::size_t>(r));
  double outside = 0.0;
  for (std::size_t r : outer) outside += u(r);
  if (!outer.empty()) outside /= static_cast<double>(outer.size());

  const double sign = seg.foreground ? 1.0 : -1.0;
  for (std::size_t r = seg.start; r <= seg.end; ++r) visit(r, sign / static_cast<double>(l));
  for (std::size_t r : outer) visit(r, -sign / static_cast<double>(outer.size()));
  return inside - outside;
}

}  // namespace detail

/// Mean over segments of (mean inside confidence - mean flank confidence).
inline double oic_score(std::span<const double> m, const SegmentList& segments, double delta) {
  if (segments.empty()) return 0.0;
  double total = 0.0;
  for (const auto& seg : segments) total += detail::oic_segment(m, seg, delta, [](std::size_t, double) {});
  return total / static_cast<double>(segments.size());
}

/// OIC score and its gradient with respect to m (segments held fixed).
inline double oic_score_with_grad(std::span<const double> m, const SegmentList& segments, double delta,
                                  std::vector<double>& grad) {
  grad.assign(m.size(), 0.0);
  if (segments.empty()) return 0.0;
  const double inv = 1.0 / static_cast<double>(segments.size());
  double total = 0.0;
  for (const auto& seg : segments)
    total += detail::oic_segment(m, seg, delta, [&](std::size_t r, double wgt) { grad[r] += inv * wgt; });
  return total * inv;
}

struct BestThreshold {
  std::size_t index = 0;
  double score = 0.0;
};

/// argmax over the threshold set of the OIC score; ties keep the smaller
/// threshold.
inline BestThreshold best_threshold(std::span<const double> m, const LossWeights& w) {
  BestThreshold best{0, -INFINITY};
  for (std::size_t j = 0; j < w.thresholds.size(); ++j) {
    const double r = oic_score(m, binarize_segments(m, w.thresholds[j]), w.delta);
    if (r > best.score) best = {j, r};
  }
  return best;
}

struct PromotionTerm {
  double value = 0.0;
  BestThreshold best;
  std::vector<double> dm;
};

/// (1 - R*)^beta * ||m - g||_2 for one foreground snippet.
inline PromotionTerm promotion_term(std::span<const double> m, std::span<const double> g, const LossWeights& w) {
  if (m.size() != g.size()) throw ValidationError("promotion_loss: length mismatch");
  PromotionTerm out;
  out.best = best_threshold(m, w);
  std::vector<double> dr;
  const double r = oic_score_with_grad(m, binarize_segments(m, w.thresholds[out.best.index]), w.delta, dr);
  double sq = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) sq += (m[i] - g[i]) * (m[i] - g[i]);
  const double norm = std::sqrt(sq);
  const double q = 1.0 - r;
  const double factor = std::pow(q, w.beta);
  out.value = factor * norm;
  out.dm.assign(m.size(), 0.0);
  double dfactor = 0.0;  // d factor / d R
  if (w.beta != 0.0 && q > 0.0) dfactor = -w.beta * std::pow(q, w.beta - 1.0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    out.dm[i] = dfactor * dr[i] * norm;
    if (norm > 0.0) out.dm[i] += factor * (m[i] - g[i]) / norm;
  }
  return out;
}

inline double promotion_loss(std::span<const double> m, std::span<const double> g, const LossWeights& w) {
  return promotion_term(m, g, w).value;
}

// ---------------------------------------------------------------------------
// Classification-mask feature consistency

/// Indices of the k largest scores; ties resolve to the lower index.
inline std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });
  idx.resize(k);
  return idx;
}

struct ConsistencyTerm {
  double value = 0.0;
  bool degenerate = false;  // a pooled feature had zero norm
  std::vector<std::size_t> clf_index, mask_index;
  Matrix d_proj_clf, d_proj_mask;
};

/// Per-snippet foreground score of the thresholded class probabilities
/// (probs is (K+1) x T, background last).
inline std::vector<double> classification_foreground_scores(const Matrix& probs, double theta_c) {
  const std::size_t K = probs.rows() - 1;
  std::vector<double> s(probs.cols(), 0.0);
  for (std::size_t t = 0; t < probs.cols(); ++t)
    for (std::size_t k = 0; k < K; ++k) {
      const double v = probs(k, t) >= theta_c ? probs(k, t) : 0.0;
      s[t] = std::max(s[t], v);
    }
  return s;
}

/// sigmoid of the column mean of the thresholded mask (masks is T x T,
/// column t = mask of snippet t).
inline std::vector<double> mask_foreground_scores(const Matrix& masks, double theta_m) {
  std::vector<double> v(masks.cols(), 0.0);
  for (std::size_t t = 0; t < masks.cols(); ++t) {
    double acc = 0.0;
    for (std::size_t r = 0; r < masks.rows(); ++r) acc += masks(r, t) >= theta_m ? masks(r, t) : 0.0;
    v[t] = 1.0 / (1.0 + std::exp(-acc / static_cast<double>(masks.rows())));
  }
  return v;
}

/// 1 - cosine between the mean projected features of the top-k snippets
/// chosen by each branch. Selection is piecewise constant, so gradients
/// flow only into the two projections.
inline ConsistencyTerm consistency_loss(const Matrix& proj_clf, const Matrix& proj_mask, const Matrix& probs,
                                        const Matrix& masks, const LossWeights& w) {
  const std::size_t T = proj_clf.rows();
  if (!proj_clf.same_shape(proj_mask) || probs.cols() != T || masks.cols() != T || masks.rows() != T)
    throw ValidationError("consistency_loss: shape mismatch");
  ConsistencyTerm out;
  const std::size_t k = std::min(w.topk, T);
  out.clf_index = topk_indices(classification_foreground_scores(probs, w.theta_c), k);
  out.mask_index = topk_indices(mask_foreground_scores(masks, w.theta_m), k);
  out.d_proj_clf = Matrix(T, proj_clf.cols());
  out.d_proj_mask = Matrix(T, proj_mask.cols());

  const std::size_t D = proj_clf.cols();
  std::vector<double> a(D, 0.0), b(D, 0.0);
  for (std::size_t i : out.clf_index)
    for (std::size_t c = 0; c < D; ++c) a[c] += proj_clf(i, c) / static_cast<double>(k);
  for (std::size_t i : out.mask_index)
    for (std::size_t c = 0; c < D; ++c) b[c] += proj_mask(i, c) / static_cast<double>(k);
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t c = 0; c < D; ++c) {
    ab += a[c] * b[c];
    aa += a[c] * a[c];
    bb += b[c] * b[c];
  }
  if (aa == 0.0 || bb == 0.0) {
    out.value = 1.0;
    out.degenerate = true;
    return out;
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  const double cos = ab / (na * nb);
  out.value = 1.0 - cos;
  for (std::size_t c = 0; c < D; ++c) {
    const double da = -(b[c] / (na * nb) - cos * a[c] / aa);
    const double db = -(a[c] / (na * nb) - cos * b[c] / bb);
    for (std::size_t i : out.clf_index) out.d_proj_clf(i, c) += da / static_cast<double>(k);
    for (std::size_t i : out.mask_index) out.d_proj_mask(i, c) += db / static_cast<double>(k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-scale objective

/// Network outputs of one scale, time-major.
struct ScaleLossInputs {
  const Matrix* logits = nullptr;     // T x (K+1)
  const Matrix* masks = nullptr;      // T x T, row t = mask column t
  const Matrix* proj_clf = nullptr;   // T x D_c
  const Matrix* proj_mask = nullptr;  // T x D_c
};

struct LossTerms {
  double classification = 0.0;
  double mask = 0.0;
  double promotion = 0.0;
  double consistency = 0.0;

  double total() const { return classification + mask + promotion + consistency; }

  LossTerms& operator+=(const LossTerms& o) {
    classification += o.classification;
    mask += o.mask;
    promotion += o.promotion;
    consistency += o.consistency;
    return *this;
  }
};

struct ScaleLoss {
  LossTerms terms;
  bool consistency_degenerate = false;
  Matrix d_logits, d_masks, d_proj_clf, d_proj_mask;
};

/// Which terms contribute to the returned value and gradients.
struct TermMask {
  bool classification = true, mask = true, promotion = true, consistency = true;
};

/// mean_t L_c + mean_{fg t} L_m + L_pp + L_fc for one scale.
inline ScaleLoss scale_loss(const ScaleLossInputs& in, const ScaleTargets& targets, const LossWeights& w,
                            TermMask use = {}) {
  const Matrix& logits = *in.logits;
  const Matrix& masks = *in.masks;
  const std::size_t T = logits.rows();
  if (targets.length() != T || masks.rows() != T || masks.cols() != T || logits.cols() != targets.num_classes + 1)
    throw ValidationError("scale_loss: outputs do not match targets at scale " + std::to_string(targets.scale));
  ScaleLoss out;
  out.d_logits = Matrix(T, logits.cols());
  out.d_masks = Matrix(T, T);

  if (use.classification) {
    const double inv = 1.0 / static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) {
      auto term = classification_loss_logits(logits.row(t), static_cast<std::size_t>(targets.labels[t]), w);
      out.terms.classification += term.value * inv;
      for (std::size_t k = 0; k < logits.cols(); ++k) out.d_logits(t, k) += term.dlogits[k] * inv;
    }
  }

  const auto fg = targets.foreground();
  if (use.mask && !fg.empty()) {
    const double inv = 1.0 / static_cast<double>(fg.size());
    for (std::size_t t : fg) {
      const auto g = targets.mask(t);
      auto term = mask_loss_with_grad(masks.row(t), g, w);
      out.terms.mask += term.value * inv;
      for (std::size_t r = 0; r < T; ++r) out.d_masks(t, r) += term.dm[r] * inv;
    }
  }

  if (use.promotion && !fg.empty()) {
    std::vector<std::vector<std::size_t>> groups;
    std::vector<int> ids;
    for (std::size_t t : fg) {
      auto it = std::find(ids.begin(), ids.end(), targets.instance[t]);
      if (it == ids.end()) {
        ids.push_back(targets.instance[t]);
        groups.push_back({t});
      } else {
        groups[static_cast<std::size_t>(it - ids.begin())].push_back(t);
      }
    }
    const double inv_inst = 1.0 / static_cast<double>(groups.size());
    for (const auto& members : groups) {
      const double inv = inv_inst / static_cast<double>(members.size());
      for (std::size_t t : members) {
        const auto g = targets.mask(t);
        auto term = promotion_term(masks.row(t), g, w);
        out.terms.promotion += term.value * inv;
        for (std::size_t r = 0; r < T; ++r) out.d_masks(t, r) += term.dm[r] * inv;
      }
    }
  }

  if (use.consistency) {
    auto term = consistency_loss(*in.proj_clf, *in.proj_mask, ad::softmax_rows_values(logits).transposed(),
                                 masks.transposed(), w);
    out.terms.consistency = term.value;
    out.consistency_degenerate = term.degenerate;
    out.d_proj_clf = std::move(term.d_proj_clf);
    out.d_proj_mask = std::move(term.d_proj_mask);
  } else {
    out.d_proj_clf = Matrix(in.proj_clf->rows(), in.proj_clf->cols());
    out.d_proj_mask = Matrix(in.proj_mask->rows(), in.proj_mask->cols());
  }
  return out;
}

}  // namespace tags
