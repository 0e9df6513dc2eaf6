#pragma once

// Multi-scale self-attentive snippet embedding.
//
// Per scale s: the base sequence is average-pooled to ceil(T/s) rows, layer
// normalized, and passed through n_h attention heads whose outputs are
// concatenated. Head i adds the i-th column block of its input as residual,
// so the concatenation is x + MultiHead(x). A pre-normalized single
// fully-connected layer with residual skip follows.

#include <cmath>
#include <string>
#include <vector>

#include "tags/autodiff.hpp"
#include "tags/model_config.hpp"
#include "tags/params.hpp"

namespace tags {

inline std::string scale_prefix(const std::string& module, std::size_t s) {
  return module + ".s" + std::to_string(s) + ".";
}

/// Graph form of temporal average pooling.
inline ad::Var temporal_pool(const ad::Var& x, const PoolingConfig& pool) {
  if (pool.kernel == 1 && pool.stride == 1 && pool.pad == 0) return x;
  return ad::avg_pool_rows(x, pool.kernel, pool.stride, pool.pad);
}

/// Average pooling along the temporal axis with `pad` zero rows at both ends.
inline Matrix temporal_pool(const Matrix& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (kernel < 1 || stride < 1) throw ValidationError("temporal_pool: kernel and stride must be >= 1");
  if (ad::pooled_length(x.rows(), kernel, stride, pad) < 1)
    throw ValidationError("temporal_pool: output length < 1 for T=" + std::to_string(x.rows()));
  ad::Tape tape;
  return ad::avg_pool_rows(tape.constant(x), kernel, stride, pad).value();
}

/// Pools the base sequence down to exactly ceil(T/s) rows. When the pooling
/// window does not tile T, the last row is repeated at the tail first.
inline ad::Var pool_to_scale(const ad::Var& base, const ModelConfig& cfg, std::size_t s) {
  const PoolingConfig pool = cfg.pooling_for(s);
  const std::size_t T = base.value().rows();
  const std::size_t target = (T + s - 1) / s;
  std::size_t padded = T;
  while (ad::pooled_length(padded, pool.kernel, pool.stride, pool.pad) < target && padded < T + pool.kernel * s + 8)
    ++padded;
  if (ad::pooled_length(padded, pool.kernel, pool.stride, pool.pad) != target) {
    throw ValidationError("pooling {" + std::to_string(pool.kernel) + "," + std::to_string(pool.stride) + "," +
                          std::to_string(pool.pad) + "} cannot produce ceil(T/" + std::to_string(s) + ") rows");
  }
  ad::Var x = base;
  if (padded != T) {
    std::vector<std::size_t> idx(padded);
    for (std::size_t i = 0; i < padded; ++i) idx[i] = std::min(i, T - 1);
    x = ad::gather_rows(base, std::move(idx));
  }
  return temporal_pool(x, pool);
}

/// One attention head over an already pooled input:
///   out = x[:, offset : offset + d] + softmax(Q K^T / sqrt(d)) V,
///   Q = x Wq, K = x Wk, V = x Wv  (Wq, Wk, Wv are C x d).
/// When `weights` is non-null it receives the row-stochastic attention matrix.
inline ad::Var attention_head(const ad::Var& x, const ad::Var& wq, const ad::Var& wk, const ad::Var& wv,
                              std::size_t residual_offset, Matrix* weights = nullptr) {
  const std::size_t d = wq.value().cols();
  if (wk.value().cols() != d || wv.value().cols() != d || wq.value().rows() != x.value().cols() ||
      wk.value().rows() != x.value().cols() || wv.value().rows() != x.value().cols()) {
    throw ValidationError("attention_head: projection shapes do not match input width " +
                          std::to_string(x.value().cols()));
  }
  if (residual_offset + d > x.value().cols()) throw ValidationError("attention_head: residual slice out of range");
  ad::Var q = ad::matmul(x, wq);
  ad::Var k = ad::matmul(x, wk);
  ad::Var v = ad::matmul(x, wv);
  ad::Var scores = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  ad::Var attn = ad::softmax_rows(scores);
  if (weights) *weights = attn.value();
  ad::Var residual = (residual_offset == 0 && d == x.value().cols()) ? x : ad::slice_cols(x, residual_offset, d);
  return ad::add(residual, ad::matmul(attn, v));
}

/// Plain form: pools F (queries, keys and values share the pooling), then
/// applies one head.
inline Matrix attention_head(const Matrix& F, const Matrix& wq, const Matrix& wk, const Matrix& wv,
                             const PoolingConfig& pool = {}, std::size_t residual_offset = 0,
                             Matrix* weights = nullptr) {
  if (!F.all_finite()) throw ValidationError("attention_head: non-finite input");
  ad::Tape tape;
  ad::Var x = temporal_pool(tape.constant(F), pool);
  return attention_head(x, tape.constant(wq), tape.constant(wk), tape.constant(wv), residual_offset, weights).value();
}

/// Sinusoidal position signal, T x C.
inline Matrix positional_encoding(std::size_t T, std::size_t C, double base) {
  Matrix pe(T, C);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c) {
      const double freq = std::pow(base, -static_cast<double>(2 * (c / 2)) / static_cast<double>(C));
      pe(t, c) = (c % 2 == 0) ? std::sin(static_cast<double>(t) * freq) : std::cos(static_cast<double>(t) * freq);
    }
  return pe;
}

/// Base-resolution sequence shared by every scale: optional input
/// projection to width C, plus the optional position signal.
inline ad::Var encoder_input(const BoundParams& p, const ModelConfig& cfg, const ad::Var& features) {
  ad::Var x = features;
  if (cfg.input_dim != cfg.width) x = ad::add_row_vector(ad::matmul(x, p["encoder.input.w"]), p["encoder.input.b"]);
  if (cfg.positional_encoding) {
    x = ad::add(x, x.tape().constant(positional_encoding(x.value().rows(), cfg.width, cfg.positional_base)));
  }
  return x;
}

/// Embedding E^s (ceil(T/s) x C) for one scale.
inline ad::Var embed_scale(const BoundParams& p, const ModelConfig& cfg, const ad::Var& base, std::size_t s,
                           std::vector<Matrix>* attention_weights = nullptr) {
  const std::string pre = scale_prefix("encoder", s);
  ad::Var xs = pool_to_scale(base, cfg, s);
  ad::Var normed = ad::layer_norm_rows(xs, p[pre + "ln1.gain"], p[pre + "ln1.bias"]);
  std::vector<ad::Var> heads;
  const std::size_t d = cfg.head_dim();
  for (std::size_t i = 0; i < cfg.num_heads; ++i) {
    const std::string hp = pre + "head" + std::to_string(i) + ".";
    Matrix w;
    heads.push_back(attention_head(normed, p[hp + "q"], p[hp + "k"], p[hp + "v"], i * d,
                                   attention_weights ? &w : nullptr));
    if (attention_weights) attention_weights->push_back(std::move(w));
  }
  ad::Var multi = heads.size() == 1 ? heads.front() : ad::concat_cols(heads);
  ad::Var mlp_in = ad::layer_norm_rows(multi, p[pre + "ln2.gain"], p[pre + "ln2.bias"]);
  ad::Var mlp = ad::add_row_vector(ad::matmul(mlp_in, p[pre + "mlp.w"]), p[pre + "mlp.b"]);
  return ad::add(multi, mlp);
}

/// Plain form: embeddings for every configured scale.
inline std::vector<Matrix> embed(const Matrix& features, const ParamTable& params, const ModelConfig& cfg) {
  if (features.cols() != cfg.input_dim)
    throw ValidationError("embed: feature dim " + std::to_string(features.cols()) + " != " +
                          std::to_string(cfg.input_dim));
  ad::Tape tape;
  BoundParams p(tape, params, false);
  ad::Var base = encoder_input(p, cfg, tape.constant(features));
  std::vector<Matrix> out;
  for (std::size_t s : cfg.scales) out.push_back(embed_scale(p, cfg, base, s).value());
  return out;
}

}  // namespace tags
