#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tags/autodiff.hpp"
#include "tags/encoder.hpp"
#include "tags/heads.hpp"
#include "tags/model_config.hpp"
#include "tags/params.hpp"

namespace tags {

namespace detail {

inline void add_linear(ParamTable& t, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
  t.add(name + ".w", 2, glorot_uniform(in, out, double(in), double(out), rng));
  t.add(name + ".b", 1, Matrix(1, out));
}

inline void add_conv(ParamTable& t, const std::string& name, std::size_t width, std::size_t in, std::size_t out,
                     std::mt19937_64& rng) {
  t.add(name + ".w", 2, glorot_uniform(width * in, out, double(width * in), double(width * out), rng));
  t.add(name + ".b", 1, Matrix(1, out));
}

inline void add_layer_norm(ParamTable& t, const std::string& name, std::size_t n) {
  t.add(name + ".gain", 1, Matrix(1, n, 1.0));
  t.add(name + ".bias", 1, Matrix(1, n));
}

}  // namespace detail

/// Fresh parameters: Glorot-uniform weights, zero biases, unit norm gains.
inline ParamTable init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParamTable t;
  const std::size_t C = cfg.width, d = cfg.head_dim(), K1 = cfg.num_classes + 1, w = cfg.kernel_width;
  if (cfg.input_dim != C) detail::add_linear(t, "encoder.input", cfg.input_dim, C, rng);
  for (std::size_t s : cfg.scales) {
    const std::string enc = scale_prefix("encoder", s);
    detail::add_layer_norm(t, enc + "ln1", C);
    for (std::size_t i = 0; i < cfg.num_heads; ++i) {
      const std::string hp = enc + "head" + std::to_string(i) + ".";
      for (const char* proj : {"q", "k", "v"}) t.add(hp + proj, 2, glorot_uniform(C, d, double(C), double(d), rng));
    }
    detail::add_layer_norm(t, enc + "ln2", C);
    detail::add_linear(t, enc + "mlp", C, C, rng);

    const std::string hd = scale_prefix("heads", s);
    const std::size_t Ts = cfg.scaled_length(s);
    detail::add_conv(t, hd + "cls", w, C, K1, rng);
    detail::add_conv(t, hd + "mask1", w, C, C, rng);
    detail::add_conv(t, hd + "mask2", w, C, C, rng);
    detail::add_conv(t, hd + "mask3", w, C, Ts, rng);
  }
  detail::add_conv(t, "consistency.clf", w, C, cfg.consistency_width, rng);
  detail::add_conv(t, "consistency.mask", w, C, cfg.consistency_width, rng);
  return t;
}

/// Graph handles for one scale, all time-major.
struct ScaleGraph {
  std::size_t scale = 1;
  ad::Var embedding;  // T^s x C
  ad::Var logits;     // T^s x (K+1)
  ad::Var masks;      // T^s x T^s, row t = mask column t
  ad::Var proj_clf;   // T^s x D_c
  ad::Var proj_mask;  // T^s x D_c
};

inline std::vector<ScaleGraph> build_forward(const BoundParams& p, const ModelConfig& cfg, ad::Tape& tape,
                                             const Matrix& features) {
  if (features.rows() != cfg.snippets || features.cols() != cfg.input_dim) {
    throw ValidationError("features are " + shape_string(features) + ", model expects " +
                          std::to_string(cfg.snippets) + "x" + std::to_string(cfg.input_dim));
  }
  ad::Var base = encoder_input(p, cfg, tape.constant(features));
  std::vector<ScaleGraph> out;
  for (std::size_t s : cfg.scales) {
    ScaleGraph g;
    g.scale = s;
    g.embedding = embed_scale(p, cfg, base, s);
    g.logits = class_logits(p, cfg, g.embedding, s);
    g.masks = mask_rows(p, cfg, g.embedding, s);
    g.proj_clf = ad::conv1d_same(g.embedding, p["consistency.clf.w"], p["consistency.clf.b"], cfg.kernel_width);
    g.proj_mask = ad::conv1d_same(g.embedding, p["consistency.mask.w"], p["consistency.mask.b"], cfg.kernel_width);
    out.push_back(g);
  }
  return out;
}

inline ScaleOutputs to_outputs(const ScaleGraph& g) {
  ScaleOutputs o;
  o.scale = g.scale;
  o.probs = probs_from_logits(g.logits.value());
  o.regress = regress_from_logits(g.logits.value());
  o.masks = g.masks.value().transposed();
  o.embedding = g.embedding.value();
  return o;
}

/// Inference-time forward pass over every scale.
inline std::vector<ScaleOutputs> forward(const ParamTable& params, const ModelConfig& cfg, const Matrix& features) {
  ad::Tape tape;
  BoundParams p(tape, params, false);
  std::vector<ScaleOutputs> out;
  for (const auto& g : build_forward(p, cfg, tape, features)) out.push_back(to_outputs(g));
  return out;
}

}  // namespace tags
