#pragma once

// Central finite-difference checks of the analytic parameter gradients.
// Coordinates whose two-step estimates disagree sit on a tie or switch point
// of a min/max/argmax and are skipped.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tags/synthetic.hpp"
#include "tags/training.hpp"

namespace tags {

inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

enum class LossTerm { kClassification, kMask, kPromotion, kConsistency, kTotal };

inline constexpr std::array<LossTerm, 5> kAllLossTerms{LossTerm::kClassification, LossTerm::kMask,
                                                      LossTerm::kPromotion, LossTerm::kConsistency, LossTerm::kTotal};

inline std::string loss_term_name(LossTerm t) {
  switch (t) {
    case LossTerm::kClassification: return "L_c";
    case LossTerm::kMask: return "L_m";
    case LossTerm::kPromotion: return "L_pp";
    case LossTerm::kConsistency: return "L_fc";
    case LossTerm::kTotal: return "total";
  }
  return "?";
}

inline TermMask term_mask(LossTerm t) {
  TermMask m{false, false, false, false};
  switch (t) {
    case LossTerm::kClassification: m.classification = true; break;
    case LossTerm::kMask: m.mask = true; break;
    case LossTerm::kPromotion: m.promotion = true; break;
    case LossTerm::kConsistency: m.consistency = true; break;
    case LossTerm::kTotal: m = TermMask{}; break;
  }
  return m;
}

struct GradcheckOptions {
  double step = 1e-5;
  double floor = 1e-7;
  double tie_tolerance = 1e-3;      // relative disagreement of h and h/2 estimates marking a tie point
  std::size_t coords_per_tensor = 2;  // 0 checks every coordinate
};

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "tensor[index]"
  std::size_t checked = 0;
  std::size_t skipped_ties = 0;

  void merge(const GradcheckResult& o) {
    if (o.max_rel_error > max_rel_error) {
      max_rel_error = o.max_rel_error;
      worst = o.worst;
    }
    checked += o.checked;
    skipped_ties += o.skipped_ties;
  }
};

inline double batch_loss(const ParamTable& params, const TrainConfig& cfg, const std::vector<TrainingSample>& batch,
                         TermMask use) {
  double total = 0.0;
  for (const auto& s : batch) total += video_loss(params, cfg, s, use).total();
  return total / static_cast<double>(batch.size());
}

/// Compares the analytic gradient of the batch-mean loss with central
/// differences on a seeded sample of coordinates from every tensor.
inline GradcheckResult check_parameter_gradients(const ParamTable& params, const TrainConfig& cfg,
                                                 const std::vector<TrainingSample>& batch, TermMask use,
                                                 const GradcheckOptions& opt, std::uint64_t seed) {
  ParamTable analytic = params.zeros_like();
  for (const auto& s : batch) {
    auto g = video_gradient(params, cfg, s, use).grads;
    for (std::size_t t = 0; t < g.size(); ++t) {
      auto dst = analytic.at(t).value.flat();
      auto src = g.at(t).value.flat();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k] / static_cast<double>(batch.size());
    }
  }

  std::mt19937_64 rng(seed);
  ParamTable probe = params;
  auto central = [&](double& x, double h) {
    const double x0 = x;
    x = x0 + h;
    const double up = batch_loss(probe, cfg, batch, use);
    x = x0 - h;
    const double down = batch_loss(probe, cfg, batch, use);
    x = x0;
    return (up - down) / (2.0 * h);
  };

  GradcheckResult res;
  for (std::size_t t = 0; t < probe.size(); ++t) {
    auto values = probe.at(t).value.flat();
    std::vector<std::size_t> coords(values.size());
    for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = k;
    if (opt.coords_per_tensor > 0 && coords.size() > opt.coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.coords_per_tensor);
    }
    for (std::size_t k : coords) {
      const double a = analytic.at(t).value.flat()[k];
      const double n = central(values[k], opt.step);
      double err = relative_error(a, n, opt.floor);
      if (err > 1e-6) {
        const double n2 = central(values[k], opt.step / 2.0);
        if (relative_error(n, n2, opt.floor) > opt.tie_tolerance) {
          ++res.skipped_ties;
          continue;
        }
        err = std::min(err, relative_error(a, n2, opt.floor));
      }
      ++res.checked;
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst = probe.at(t).name + "[" + std::to_string(k) + "]";
      }
    }
  }
  return res;
}

/// Small randomized problem: T=16, K=3, scales {1, 2}, two videos, and
/// parameters jittered away from the initializer's zero biases.
struct GradcheckProblem {
  TrainConfig config;
  ParamTable params;
  std::vector<TrainingSample> batch;
};

inline GradcheckProblem make_gradcheck_problem(std::uint64_t seed) {
  GradcheckProblem p;
  ModelConfig& m = p.config.model;
  m.input_dim = 6;
  m.width = 8;
  m.num_heads = 2;
  m.scales = {1, 2};
  m.num_classes = 3;
  m.snippets = 16;
  m.consistency_width = 6;

  SyntheticSpec spec;
  spec.num_videos = 2;
  spec.num_classes = 3;
  spec.snippets = 16;
  spec.dim = 6;
  spec.min_len = 2;
  spec.max_len = 5;
  spec.max_instances = 2;
  spec.min_gap = 1;
  spec.noise_sigma = 0.3;
  spec.seed = seed;
  p.batch = make_samples(generate_synthetic(spec), m);

  p.params = init_params(m, seed);
  std::mt19937_64 rng(seed * 7919 + 13);
  std::normal_distribution<double> jitter(0.0, 0.2);
  for (std::size_t t = 0; t < p.params.size(); ++t)
    for (double& v : p.params.at(t).value.flat()) v += jitter(rng);
  return p;
}

struct GradcheckSummary {
  std::vector<std::pair<LossTerm, GradcheckResult>> terms;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto& [term, r] : terms) m = std::max(m, r.max_rel_error);
    return m;
  }
};

/// Runs every loss term and the total on `configs` seeded problems.
inline GradcheckSummary run_gradcheck(std::uint64_t seed, int configs, const GradcheckOptions& opt = {}) {
  GradcheckSummary summary;
  for (LossTerm term : kAllLossTerms) summary.terms.push_back({term, {}});
  for (int c = 0; c < configs; ++c) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(c) * 1000003ULL;
    GradcheckProblem prob = make_gradcheck_problem(s);
    for (auto& [term, res] : summary.terms)
      res.merge(check_parameter_gradients(prob.params, prob.config, prob.batch, term_mask(term), opt,
                                          s + static_cast<std::uint64_t>(term)));
  }
  return summary;
}

}  // namespace tags
