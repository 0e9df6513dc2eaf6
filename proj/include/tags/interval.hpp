#pragma once

#include <algorithm>

namespace tags {

/// Temporal intersection over union of [a0, a1] and [b0, b1].
inline double tiou(double a0, double a1, double b0, double b1) {
  const double inter = std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
  const double uni = std::max(a1, b1) - std::min(a0, b0);
  if (inter <= 0.0 || uni <= 0.0) return 0.0;
  return inter / uni;
}

}  // namespace tags
