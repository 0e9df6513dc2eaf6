#pragma once

#include <cstdint>
#include <string>

#include "tags/errors.hpp"
#include "tags/losses.hpp"
#include "tags/model_config.hpp"

namespace tags {

struct TrainConfig {
  int epochs = 15;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 4;
  std::uint64_t seed = 7;
  ModelConfig model;  // carries the scale set and snippet count
  LossWeights loss;

  void validate() const {
    if (epochs < 1) throw ValidationError("train config: epochs must be >= 1");
    if (!(learning_rate >= 0.0)) throw ValidationError("train config: learning rate must be >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
      throw ValidationError("train config: Adam betas must be in [0,1)");
    if (!(adam_eps > 0.0)) throw ValidationError("train config: Adam eps must be > 0");
    if (batch_size < 1) throw ValidationError("train config: batch size must be >= 1");
    model.validate();
    loss.validate();
  }
};

}  // namespace tags
