#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "tags/autodiff.hpp"
#include "tags/errors.hpp"
#include "tags/matrix.hpp"

namespace tags {

/// One named learnable tensor. Rank-1 tensors are stored as 1 x n matrices.
struct Tensor {
  std::string name;
  std::uint8_t rank = 2;
  Matrix value;
};

/// Ordered table of named tensors. Insertion order is the canonical order
/// used for initialization, checkpoints and gradient tables.
class ParamTable {
 public:
  Tensor& add(std::string name, std::uint8_t rank, Matrix value) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
    index_.emplace(name, tensors_.size());
    tensors_.push_back(Tensor{std::move(name), rank, std::move(value)});
    return tensors_.back();
  }

  std::size_t size() const { return tensors_.size(); }
  Tensor& at(std::size_t i) { return tensors_[i]; }
  const Tensor& at(std::size_t i) const { return tensors_[i]; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }
  Matrix& operator[](const std::string& name) { return tensors_[index_of(name)].value; }
  const Matrix& operator[](const std::string& name) const { return tensors_[index_of(name)].value; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.value.size();
    return n;
  }

  /// Same names, ranks and shapes, zero-filled.
  ParamTable zeros_like() const {
    ParamTable out;
    for (const auto& t : tensors_) out.add(t.name, t.rank, Matrix(t.value.rows(), t.value.cols()));
    return out;
  }

  bool same_layout(const ParamTable& other) const {
    if (size() != other.size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      if (tensors_[i].name != other.tensors_[i].name || !tensors_[i].value.same_shape(other.tensors_[i].value))
        return false;
    }
    return true;
  }

  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  friend bool operator==(const ParamTable& a, const ParamTable& b) {
    if (!a.same_layout(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!(a.tensors_[i].value == b.tensors_[i].value)) return false;
    return true;
  }

 private:
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

/// Parameters placed on a tape, looked up by name during graph construction.
class BoundParams {
 public:
  BoundParams(ad::Tape& tape, const ParamTable& table, bool trainable) : table_(&table) {
    vars_.reserve(table.size());
    for (const auto& t : table) vars_.push_back(trainable ? tape.parameter(t.value) : tape.constant(t.value));
  }

  ad::Var operator[](const std::string& name) const { return vars_[table_->index_of(name)]; }
  const std::vector<ad::Var>& vars() const { return vars_; }

  /// Gradients after a backward sweep, keyed like the table; unreached
  /// parameters get zeros.
  ParamTable gradients(ad::Tape& tape) const {
    ParamTable g = table_->zeros_like();
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      const Matrix& gi = tape.grad(vars_[i].id());
      if (!gi.empty()) g.at(i).value = gi;
    }
    return g;
  }

 private:
  const ParamTable* table_;
  std::vector<ad::Var> vars_;
};

/// Glorot-uniform fill: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
inline Matrix glorot_uniform(std::size_t rows, std::size_t cols, double fan_in, double fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = dist(rng);
  return m;
}

}  // namespace tags
