#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "tags/errors.hpp"

namespace tags {

struct PoolingConfig {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  friend bool operator==(const PoolingConfig&, const PoolingConfig&) = default;
};

/// Architecture hyper-parameters. The mask branch emits one channel per
/// snippet, so a model is tied to a fixed snippet count.
struct ModelConfig {
  std::size_t input_dim = 16;
  std::size_t width = 64;  // embedding width C
  std::size_t num_heads = 4;
  std::vector<std::size_t> scales{1, 2};
  std::size_t num_classes = 3;  // K foreground classes; index K is background
  std::size_t snippets = 64;    // base temporal length T
  std::size_t kernel_width = 3;
  std::size_t consistency_width = 16;
  bool positional_encoding = true;
  double positional_base = 200.0;
  std::map<std::size_t, PoolingConfig> pooling;  // per-scale overrides of {s, s, 0}

  std::size_t head_dim() const { return width / num_heads; }
  std::size_t scaled_length(std::size_t s) const { return (snippets + s - 1) / s; }

  PoolingConfig pooling_for(std::size_t s) const {
    auto it = pooling.find(s);
    return it != pooling.end() ? it->second : PoolingConfig{s, s, 0};
  }

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw ValidationError("model config: " + what);
    };
    need(input_dim >= 1 && width >= 1, "input_dim and width must be >= 1");
    need(num_heads >= 1, "num_heads must be >= 1");
    need(width % num_heads == 0, "width must be divisible by num_heads");
    need(!scales.empty(), "scale set must be nonempty");
    need(std::is_sorted(scales.begin(), scales.end()) &&
             std::adjacent_find(scales.begin(), scales.end()) == scales.end(),
         "scales must be strictly increasing");
    for (std::size_t s : scales) need(s == 1 || s == 2 || s == 4, "scales must be drawn from {1, 2, 4}");
    need(num_classes >= 1, "num_classes must be >= 1");
    need(snippets >= 1, "snippets must be >= 1");
    need(kernel_width % 2 == 1, "kernel_width must be odd");
    need(consistency_width >= 1, "consistency_width must be >= 1");
    need(positional_base > 1.0, "positional_base must be > 1");
    for (const auto& [s, p] : pooling) need(p.kernel >= 1 && p.stride >= 1, "pooling kernel/stride must be >= 1");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace tags
