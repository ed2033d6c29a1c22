#pragma once

#include <optional>

#include "loadest/core.hpp"

namespace loadest {

struct TrustParams {
  double s_d = 15.0;    // disagreement scale, passengers
  double s_e = 5.0;     // residual scale, passengers
  double alpha0 = 0.5;  // weight used by the fixed-fusion baseline

  void validate() const;
};

/// Weight on the physical state:
///   omega = v * exp(-d / s_d) * exp(-e / s_e),  alpha = 1 / (1 + omega).
/// Exactly 1 when the anchor is invalid.
double trust_weight(bool anchor_valid, double disagreement, double e_phys, const TrustParams& params);

/// clamp_[0,C](alpha * l_phys + (1 - alpha) * anchor). Without an anchor the
/// physical state passes through, and alpha must be 1.
double fuse(double l_phys, std::optional<double> anchor, double alpha, Capacity capacity);

double disagreement(double anchor, double l_phys);

}  // namespace loadest
