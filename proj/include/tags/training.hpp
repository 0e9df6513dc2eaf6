#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tags/autodiff.hpp"
#include "tags/checkpoint.hpp"
#include "tags/errors.hpp"
#include "tags/labels.hpp"
#include "tags/losses.hpp"
#include "tags/model.hpp"
#include "tags/params.hpp"
#include "tags/synthetic.hpp"
#include "tags/train_config.hpp"

namespace tags {

struct TrainingSample {
  std::string video_id;
  Matrix features;                    // T x dim
  std::vector<ScaleTargets> targets;  // one per configured scale
};

inline TrainingSample make_sample(const FeatureSequence& seq, const VideoAnnotation& ann,
                                  const std::vector<std::string>& classes, const ModelConfig& cfg) {
  if (seq.length() != cfg.snippets || seq.dim() != cfg.input_dim) {
    throw ValidationError("video '" + seq.video_id + "' has " + shape_string(seq.values) + " features, model expects " +
                          std::to_string(cfg.snippets) + "x" + std::to_string(cfg.input_dim));
  }
  TrainingSample s{seq.video_id, seq.values, {}};
  for (std::size_t scale : cfg.scales) s.targets.push_back(assign_targets(ann, cfg.snippets, scale, classes));
  return s;
}

inline std::vector<TrainingSample> make_samples(const Dataset& data, const ModelConfig& cfg) {
  std::vector<TrainingSample> out;
  for (const auto& seq : data.features)
    out.push_back(make_sample(seq, data.annotations.videos.at(seq.video_id), data.annotations.classes, cfg));
  return out;
}

struct VideoLoss {
  std::vector<LossTerms> per_scale;
  LossTerms terms;  // summed over scales
  bool consistency_degenerate = false;

  double total() const { return terms.total(); }
};

/// Attaches the objective of every scale to a recorded forward pass and
/// returns the root node.
inline ad::Var attach_objective(const std::vector<ScaleGraph>& graphs, const TrainingSample& sample,
                                const LossWeights& w, VideoLoss& loss, TermMask use = {}) {
  ad::Var root;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const ScaleGraph& g = graphs[i];
    ScaleLossInputs in{&g.logits.value(), &g.masks.value(), &g.proj_clf.value(), &g.proj_mask.value()};
    ScaleLoss sl = scale_loss(in, sample.targets[i], w, use);
    loss.per_scale.push_back(sl.terms);
    loss.terms += sl.terms;
    loss.consistency_degenerate = loss.consistency_degenerate || sl.consistency_degenerate;
    ad::Var node = ad::fused_scalar({g.logits, g.masks, g.proj_clf, g.proj_mask}, sl.terms.total(),
                                    {std::move(sl.d_logits), std::move(sl.d_masks), std::move(sl.d_proj_clf),
                                     std::move(sl.d_proj_mask)});
    root = root.valid() ? ad::add(root, node) : node;
  }
  return root;
}

/// Reverse sweep from `loss`; returns gradients keyed like the parameter
/// table. Throws NumericalError naming the first non-finite tensor.
inline ParamTable backward(ad::Tape& tape, const BoundParams& bound, const ad::Var& loss) {
  tape.backward(loss);
  ParamTable grads = bound.gradients(tape);
  for (const auto& t : grads)
    if (!t.value.all_finite()) throw NumericalError("non-finite gradient in tensor '" + t.name + "'");
  return grads;
}

inline VideoLoss video_loss(const ParamTable& params, const TrainConfig& cfg, const TrainingSample& sample,
                            TermMask use = {}) {
  ad::Tape tape;
  BoundParams bound(tape, params, false);
  VideoLoss loss;
  attach_objective(build_forward(bound, cfg.model, tape, sample.features), sample, cfg.loss, loss, use);
  return loss;
}

struct VideoGradient {
  VideoLoss loss;
  ParamTable grads;
};

inline VideoGradient video_gradient(const ParamTable& params, const TrainConfig& cfg, const TrainingSample& sample,
                                    TermMask use = {}) {
  ad::Tape tape;
  BoundParams bound(tape, params, true);
  VideoGradient out;
  ad::Var root = attach_objective(build_forward(bound, cfg.model, tape, sample.features), sample, cfg.loss, out.loss, use);
  if (!std::isfinite(root.value()(0, 0)))
    throw NumericalError("non-finite loss on video '" + sample.video_id + "'");
  out.grads = backward(tape, bound, root);
  return out;
}

struct BatchGradient {
  LossTerms terms;  // mean over the batch
  ParamTable grads;  // mean over the batch
};

/// Per-video gradients (optionally on several threads) reduced in batch
/// order, so the result does not depend on the worker count.
inline BatchGradient batch_gradient(const ParamTable& params, const TrainConfig& cfg,
                                    const std::vector<TrainingSample>& samples,
                                    const std::vector<std::size_t>& batch, std::size_t workers = 1) {
  std::vector<VideoGradient> results(batch.size());
  std::vector<std::exception_ptr> errors(batch.size());
  auto work = [&](std::size_t i) {
    try {
      results[i] = video_gradient(params, cfg, samples[batch[i]]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, batch.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t wk = 0; wk < workers; ++wk)
      pool.emplace_back([&, wk] {
        for (std::size_t i = wk; i < batch.size(); i += workers) work(i);
      });
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  BatchGradient out;
  out.grads = params.zeros_like();
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& r : results) {
    out.terms.classification += r.loss.terms.classification * inv;
    out.terms.mask += r.loss.terms.mask * inv;
    out.terms.promotion += r.loss.terms.promotion * inv;
    out.terms.consistency += r.loss.terms.consistency * inv;
    for (std::size_t t = 0; t < out.grads.size(); ++t) {
      auto dst = out.grads.at(t).value.flat();
      auto src = r.grads.at(t).value.flat();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k] * inv;
    }
  }
  return out;
}

// Adam -----------------------------------------------------------------------

struct AdamState {
  std::uint64_t step = 0;
  ParamTable first;
  ParamTable second;
};

inline AdamState adam_init(const ParamTable& params) { return {0, params.zeros_like(), params.zeros_like()}; }

/// One bias-corrected Adam update.
inline void adam_step(ParamTable& params, const ParamTable& grads, AdamState& state, const TrainConfig& cfg) {
  if (!params.same_layout(grads) || !params.same_layout(state.first) || !params.same_layout(state.second))
    throw ValidationError("adam_step: parameter, gradient and state tables do not match");
  ++state.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params.at(t).value.flat();
    auto g = grads.at(t).value.flat();
    auto m = state.first.at(t).value.flat();
    auto v = state.second.at(t).value.flat();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
    if (!params.at(t).value.all_finite())
      throw NumericalError("non-finite parameter '" + params.at(t).name + "' after step " + std::to_string(state.step));
  }
}

// Training loop ----------------------------------------------------------------

struct EpochMetrics {
  int epoch = 0;
  LossTerms terms;  // mean over the epoch's training videos

  double total() const { return terms.total(); }
};

struct TrainOptions {
  std::size_t workers = 1;
  std::filesystem::path checkpoint;  // rewritten after every completed epoch when set
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  ParamTable params;
  std::vector<EpochMetrics> history;
};

inline TrainResult train(const std::vector<TrainingSample>& samples, const TrainConfig& cfg,
                         const TrainOptions& opts = {}) {
  cfg.validate();
  if (samples.empty()) throw ValidationError("train: dataset is empty");
  TrainResult result;
  result.params = init_params(cfg.model, cfg.seed);
  AdamState adam = adam_init(result.params);
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5851F42D4C957F2DULL);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochMetrics metrics;
    metrics.epoch = epoch;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
      std::vector<std::size_t> batch(order.begin() + static_cast<long>(first),
                                     order.begin() + static_cast<long>(std::min(order.size(), first + cfg.batch_size)));
      BatchGradient bg = batch_gradient(result.params, cfg, samples, batch, opts.workers);
      if (!std::isfinite(bg.terms.total()))
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch));
      const double share = static_cast<double>(batch.size()) / static_cast<double>(samples.size());
      metrics.terms.classification += bg.terms.classification * share;
      metrics.terms.mask += bg.terms.mask * share;
      metrics.terms.promotion += bg.terms.promotion * share;
      metrics.terms.consistency += bg.terms.consistency * share;
      adam_step(result.params, bg.grads, adam, cfg);
    }
    result.history.push_back(metrics);
    if (!opts.checkpoint.empty()) write_checkpoint(result.params, cfg, opts.checkpoint);
    if (opts.on_epoch) opts.on_epoch(metrics);
  }
  return result;
}

inline std::string metrics_csv(const std::vector<EpochMetrics>& history) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,L_c,L_m,L_pp,L_fc,total\n";
  for (const auto& m : history) {
    os << m.epoch << "," << m.terms.classification << "," << m.terms.mask << "," << m.terms.promotion << ","
       << m.terms.consistency << "," << m.total() << "\n";
  }
  return os.str();
}

}  // namespace tags
