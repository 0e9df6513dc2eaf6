#pragma once

// Detection metrics: AP/mAP over tIoU grids, false-positive profile, and
// pairwise embedding similarity.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "tags/annotations.hpp"
#include "tags/interval.hpp"
#include "tags/matrix.hpp"

namespace tags {

/// ActivityNet-style grid [0.5 : 0.05 : 0.95].
inline std::vector<double> activitynet_tious() {
  std::vector<double> t;
  for (int i = 0; i <= 9; ++i) t.push_back(static_cast<double>(50 + 5 * i) / 100.0);
  return t;
}

/// THUMOS-style grid [0.3 : 0.1 : 0.7].
inline std::vector<double> thumos_tious() { return {0.3, 0.4, 0.5, 0.6, 0.7}; }

struct RankedPrediction {
  const std::string* video_id = nullptr;
  const Detection* det = nullptr;
};

namespace detail {

/// Predictions on annotated videos, best first; ties by (video_id, start).
inline std::vector<RankedPrediction> rank_predictions(const PredictionSet& preds, const AnnotationSet& gt,
                                                      const std::string* label) {
  std::vector<RankedPrediction> out;
  for (const auto& [id, dets] : preds) {
    if (!gt.videos.count(id)) continue;
    for (const auto& d : dets)
      if (!label || d.label == *label) out.push_back({&id, &d});
  }
  std::sort(out.begin(), out.end(), [](const RankedPrediction& a, const RankedPrediction& b) {
    if (a.det->score != b.det->score) return a.det->score > b.det->score;
    if (*a.video_id != *b.video_id) return *a.video_id < *b.video_id;
    return a.det->start_s < b.det->start_s;
  });
  return out;
}

/// Greedy matching in rank order: each prediction claims the unmatched
/// same-label instance of its video with the highest tIoU >= threshold.
inline std::vector<bool> match_predictions(const std::vector<RankedPrediction>& ranked, const AnnotationSet& gt,
                                           double threshold) {
  std::map<std::string, std::vector<bool>> used;
  for (const auto& [id, v] : gt.videos) used[id].assign(v.instances.size(), false);
  std::vector<bool> tp(ranked.size(), false);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& video = gt.videos.at(*ranked[i].video_id);
    auto& flags = used[*ranked[i].video_id];
    const Detection& d = *ranked[i].det;
    long best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < video.instances.size(); ++g) {
      const Instance& inst = video.instances[g];
      if (flags[g] || inst.label != d.label) continue;
      const double iou = tiou(d.start_s, d.end_s, inst.start_s, inst.end_s);
      if (iou >= threshold && iou > best_iou) {
        best_iou = iou;
        best = static_cast<long>(g);
      }
    }
    if (best >= 0) {
      flags[static_cast<std::size_t>(best)] = true;
      tp[i] = true;
    }
  }
  return tp;
}

inline std::size_t count_instances(const AnnotationSet& gt, const std::string& label) {
  std::size_t n = 0;
  for (const auto& [id, v] : gt.videos)
    for (const auto& inst : v.instances) n += inst.label == label ? 1 : 0;
  return n;
}

}  // namespace detail

/// Non-interpolated AP: sum of precision at each true-positive rank divided
/// by the number of ground-truth instances. nullopt when the class has no
/// ground truth (excluded from mAP).
inline std::optional<double> average_precision(const PredictionSet& preds, const AnnotationSet& gt, double threshold,
                                               const std::string& label) {
  const std::size_t num_gt = detail::count_instances(gt, label);
  if (num_gt == 0) return std::nullopt;
  const auto ranked = detail::rank_predictions(preds, gt, &label);
  const auto tp = detail::match_predictions(ranked, gt, threshold);
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (!tp[i]) continue;
    ++hits;
    ap += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return ap / static_cast<double>(num_gt);
}

struct EvalReport {
  std::vector<double> tious;
  std::vector<double> map;  // per tIoU
  double average_map = 0.0;
  std::map<std::string, std::vector<double>> class_ap;  // classes with ground truth only

  nlohmann::json to_json() const {
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [c, aps] : class_ap) per_class[c] = aps;
    return {{"tious", tious}, {"mAP", map}, {"average_mAP", average_map}, {"per_class_AP", per_class}};
  }

  std::string map_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "tiou,mAP\n";
    for (std::size_t i = 0; i < tious.size(); ++i) os << tious[i] << "," << map[i] << "\n";
    os << "average," << average_map << "\n";
    return os.str();
  }

  std::string class_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "class";
    for (double t : tious) os << "," << t;
    os << "\n";
    for (const auto& [c, aps] : class_ap) {
      os << c;
      for (double a : aps) os << "," << a;
      os << "\n";
    }
    return os.str();
  }
};

inline EvalReport map_report(const PredictionSet& preds, const AnnotationSet& gt, const std::vector<double>& tious) {
  if (tious.empty()) throw ValidationError("map_report: tIoU grid is empty");
  EvalReport rep;
  rep.tious = tious;
  for (double thr : tious) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : gt.classes) {
      auto ap = average_precision(preds, gt, thr, c);
      if (!ap) continue;
      rep.class_ap[c].push_back(*ap);
      sum += *ap;
      ++n;
    }
    rep.map.push_back(n ? sum / static_cast<double>(n) : 0.0);
  }
  double total = 0.0;
  for (double m : rep.map) total += m;
  rep.average_map = total / static_cast<double>(rep.map.size());
  return rep;
}

// ---------------------------------------------------------------------------
// False-positive profile

enum class PredictionOutcome { kTruePositive, kLocalizationError, kBackgroundError };

struct FpBudget {
  std::size_t multiple = 1;  // budget = multiple x G per video
  std::size_t count = 0;     // predictions in the budget
  double true_positive = 0.0;
  double localization = 0.0;
  double background = 0.0;
};

struct FpProfile {
  double tiou_threshold = 0.5;
  double min_tiou = 0.1;
  std::size_t ground_truth = 0;
  std::vector<FpBudget> budgets;

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& b : budgets) {
      rows.push_back({{"budget", std::to_string(b.multiple) + "G"},
                      {"count", b.count},
                      {"true_positive", b.true_positive},
                      {"localization_error", b.localization},
                      {"background_error", b.background}});
    }
    return {{"tiou_threshold", tiou_threshold}, {"min_tiou", min_tiou}, {"ground_truth", ground_truth},
            {"budgets", rows}};
  }

  std::string csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "budget,count,true_positive,localization_error,background_error\n";
    for (const auto& b : budgets)
      os << b.multiple << "G," << b.count << "," << b.true_positive << "," << b.localization << "," << b.background
         << "\n";
    return os.str();
  }
};

/// Classifies each prediction of a ranked list. A prediction that is not a
/// true positive but overlaps some instance of its video by min_tiou or
/// more (whatever the label) is a localization error; the rest are
/// background errors.
inline std::vector<PredictionOutcome> classify_predictions(const std::vector<RankedPrediction>& ranked,
                                                           const AnnotationSet& gt, double threshold,
                                                           double min_tiou) {
  const auto tp = detail::match_predictions(ranked, gt, threshold);
  std::vector<PredictionOutcome> out(ranked.size());
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (tp[i]) {
      out[i] = PredictionOutcome::kTruePositive;
      continue;
    }
    double best = 0.0;
    for (const auto& inst : gt.videos.at(*ranked[i].video_id).instances)
      best = std::max(best, tiou(ranked[i].det->start_s, ranked[i].det->end_s, inst.start_s, inst.end_s));
    out[i] = best >= min_tiou ? PredictionOutcome::kLocalizationError : PredictionOutcome::kBackgroundError;
  }
  return out;
}

/// Profile over budgets of the top (n x G_v) predictions of every video,
/// n = 1..max_multiple, G_v = instances in video v.
inline FpProfile fp_profile(const PredictionSet& preds, const AnnotationSet& gt, double threshold,
                            std::size_t max_multiple = 10, double min_tiou = 0.1) {
  FpProfile prof;
  prof.tiou_threshold = threshold;
  prof.min_tiou = min_tiou;
  for (const auto& [id, v] : gt.videos) prof.ground_truth += v.instances.size();
  if (prof.ground_truth == 0) throw ValidationError("fp_profile: ground truth is empty");

  for (std::size_t n = 1; n <= max_multiple; ++n) {
    PredictionSet budgeted;
    for (const auto& [id, dets] : preds) {
      auto it = gt.videos.find(id);
      if (it == gt.videos.end() || it->second.instances.empty()) continue;
      PredictionSet single{{id, dets}};
      const auto ranked = detail::rank_predictions(single, gt, nullptr);
      const std::size_t keep = std::min(ranked.size(), n * it->second.instances.size());
      auto& dst = budgeted[id];
      for (std::size_t i = 0; i < keep; ++i) dst.push_back(*ranked[i].det);
    }
    const auto ranked = detail::rank_predictions(budgeted, gt, nullptr);
    const auto outcome = classify_predictions(ranked, gt, threshold, min_tiou);
    FpBudget b;
    b.multiple = n;
    b.count = ranked.size();
    std::size_t counts[3] = {0, 0, 0};
    for (auto o : outcome) ++counts[static_cast<int>(o)];
    if (b.count > 0) {
      const double inv = 1.0 / static_cast<double>(b.count);
      b.true_positive = counts[0] * inv;
      b.localization = counts[1] * inv;
      b.background = counts[2] * inv;
    }
    prof.budgets.push_back(b);
  }
  return prof;
}

// ---------------------------------------------------------------------------

/// Cosine similarity between every pair of rows; zero rows give 0.
inline Matrix cosine_similarity(const Matrix& e) {
  const std::size_t T = e.rows();
  std::vector<double> norm(T, 0.0);
  for (std::size_t i = 0; i < T; ++i) {
    for (double v : e.row(i)) norm[i] += v * v;
    norm[i] = std::sqrt(norm[i]);
  }
  Matrix sim(T, T);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = i; j < T; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < e.cols(); ++c) dot += e(i, c) * e(j, c);
      double s = (norm[i] > 0.0 && norm[j] > 0.0) ? dot / (norm[i] * norm[j]) : 0.0;
      if (i == j && norm[i] > 0.0) s = 1.0;
      sim(i, j) = sim(j, i) = s;
    }
  return sim;
}

}  // namespace tags
