#pragma once

// Decoding of per-scale (P, M) into scored, de-duplicated detections.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "tags/annotations.hpp"
#include "tags/errors.hpp"
#include "tags/heads.hpp"
#include "tags/interval.hpp"
#include "tags/losses.hpp"

namespace tags {

struct InferenceConfig {
  std::vector<double> thresholds = default_thresholds();
  double theta_c = 0.3;
  double nms_sigma = 0.5;
  double score_floor = 1e-4;
  std::size_t max_keep = 100;
  bool class_agnostic = true;

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw ValidationError("inference config: " + what);
    };
    need(!thresholds.empty(), "threshold set must be nonempty");
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      need(thresholds[i] > 0.0 && thresholds[i] < 1.0, "thresholds must lie in (0,1)");
      need(i == 0 || thresholds[i] > thresholds[i - 1], "thresholds must be strictly increasing");
    }
    need(theta_c > 0.0 && theta_c < 1.0, "theta_c must be in (0,1)");
    need(nms_sigma > 0.0, "nms_sigma must be > 0");
    need(score_floor >= 0.0, "score_floor must be >= 0");
    need(max_keep >= 1, "max_keep must be >= 1");
  }
};

struct VideoMeta {
  std::string video_id;
  double duration_s = 0.0;
  std::size_t snippets = 0;  // base T
};

struct Candidate {
  std::string video_id;
  std::size_t label = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  double score = 0.0;
  std::size_t scale = 1;
  std::size_t snippet = 0;
  double threshold = 0.0;
};

/// For every snippet whose best foreground probability reaches theta_c and
/// every mask threshold, the foreground run of its mask column that
/// contains the snippet itself becomes a candidate scored
/// p* x mean(mask over the run). Iteration order is snippet, then threshold.
inline std::vector<Candidate> decode_candidates(const ScaleOutputs& out, const std::vector<double>& thresholds,
                                                double theta_c, const VideoMeta& meta) {
  const std::size_t Ts = out.masks.cols();
  const std::size_t K = out.probs.rows() - 1;
  if (out.probs.cols() != Ts || out.masks.rows() != Ts)
    throw ValidationError("decode_candidates: P and M disagree on length");
  const double span = static_cast<double>(out.scale) * meta.duration_s / static_cast<double>(meta.snippets);
  std::vector<Candidate> cands;
  std::vector<double> column(Ts);
  for (std::size_t t = 0; t < Ts; ++t) {
    std::size_t label = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (out.probs(k, t) > out.probs(label, t)) label = k;
    const double pstar = out.probs(label, t);
    if (pstar < theta_c) continue;
    for (std::size_t r = 0; r < Ts; ++r) column[r] = out.masks(r, t);
    for (double theta : thresholds) {
      if (column[t] < theta) continue;
      std::size_t a = t, b = t;
      while (a > 0 && column[a - 1] >= theta) --a;
      while (b + 1 < Ts && column[b + 1] >= theta) ++b;
      double mean = 0.0;
      for (std::size_t r = a; r <= b; ++r) mean += column[r];
      mean /= static_cast<double>(b - a + 1);
      Candidate c;
      c.video_id = meta.video_id;
      c.label = label;
      c.start_s = static_cast<double>(a) * span;
      c.end_s = std::min(static_cast<double>(b + 1) * span, meta.duration_s);
      c.score = pstar * mean;
      c.scale = out.scale;
      c.snippet = t;
      c.threshold = theta;
      cands.push_back(std::move(c));
    }
  }
  return cands;
}

/// Gaussian Soft-NMS: repeatedly keep the best remaining candidate and decay
/// the rest by exp(-tIoU^2 / sigma). Output is sorted by final score.
inline std::vector<Candidate> soft_nms(std::vector<Candidate> pool, double sigma, double score_floor,
                                       std::size_t max_keep) {
  std::vector<Candidate> kept;
  while (!pool.empty() && kept.size() < max_keep) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i)
      if (pool[i].score > pool[best].score) best = i;
    Candidate top = std::move(pool[best]);
    pool.erase(pool.begin() + static_cast<long>(best));
    std::size_t w = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const double iou = tiou(top.start_s, top.end_s, pool[i].start_s, pool[i].end_s);
      pool[i].score *= std::exp(-iou * iou / sigma);
      if (pool[i].score >= score_floor) {
        if (w != i) pool[w] = std::move(pool[i]);
        ++w;
      }
    }
    pool.resize(w);
    kept.push_back(std::move(top));
  }
  return kept;
}

/// Collapses candidates with the same label and interval to the first
/// best-scoring copy, preserving order.
inline std::vector<Candidate> merge_duplicates(std::vector<Candidate> cands) {
  std::map<std::tuple<std::size_t, double, double>, std::size_t> seen;
  std::vector<Candidate> out;
  for (auto& c : cands) {
    auto [it, fresh] = seen.emplace(std::make_tuple(c.label, c.start_s, c.end_s), out.size());
    if (fresh) {
      out.push_back(std::move(c));
    } else if (c.score > out[it->second].score) {
      out[it->second] = std::move(c);
    }
  }
  return out;
}

/// Union of every scale's candidates, exact duplicates merged, then Soft-NMS.
inline std::vector<Candidate> detect(const std::vector<ScaleOutputs>& outputs, const InferenceConfig& cfg,
                                     const VideoMeta& meta) {
  std::vector<Candidate> all;
  for (const auto& out : outputs) {
    auto c = decode_candidates(out, cfg.thresholds, cfg.theta_c, meta);
    all.insert(all.end(), std::make_move_iterator(c.begin()), std::make_move_iterator(c.end()));
  }
  all = merge_duplicates(std::move(all));
  if (cfg.class_agnostic) return soft_nms(std::move(all), cfg.nms_sigma, cfg.score_floor, cfg.max_keep);

  std::map<std::size_t, std::vector<Candidate>> by_class;
  for (auto& c : all) by_class[c.label].push_back(std::move(c));
  std::vector<Candidate> merged;
  for (auto& [label, pool] : by_class) {
    auto kept = soft_nms(std::move(pool), cfg.nms_sigma, cfg.score_floor, cfg.max_keep);
    merged.insert(merged.end(), std::make_move_iterator(kept.begin()), std::make_move_iterator(kept.end()));
  }
  std::stable_sort(merged.begin(), merged.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  if (merged.size() > cfg.max_keep) merged.resize(cfg.max_keep);
  return merged;
}

inline std::vector<Detection> to_detections(const std::vector<Candidate>& cands,
                                            const std::vector<std::string>& classes) {
  std::vector<Detection> out;
  out.reserve(cands.size());
  for (const auto& c : cands) {
    if (c.label >= classes.size()) throw ValidationError("candidate label outside the class vocabulary");
    out.push_back(Detection{classes[c.label], c.score, c.start_s, c.end_s});
  }
  return out;
}

}  // namespace tags
