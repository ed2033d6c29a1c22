#include "loadest/trust.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace loadest {

void TrustParams::validate() const {
  if (!(s_d > 0.0) || !(s_e > 0.0)) throw InputError("trust: s_d and s_e must be positive");
  if (!(alpha0 >= 0.0 && alpha0 <= 1.0)) throw InputError("trust: alpha0 must lie in [0,1]");
}

double trust_weight(bool anchor_valid, double disagreement, double e_phys, const TrustParams& params) {
  if (!anchor_valid) return 1.0;
  if (!(disagreement >= 0.0) || !(e_phys >= 0.0)) {
    throw ContractViolation(fmt::format("trust_weight: d={} and e={} must be non-negative", disagreement, e_phys));
  }
  const double omega = std::exp(-disagreement / params.s_d) * std::exp(-e_phys / params.s_e);
  return 1.0 / (1.0 + omega);
}

double fuse(double l_phys, std::optional<double> anchor, double alpha, Capacity capacity) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ContractViolation(fmt::format("fuse: alpha {} outside [0,1]", alpha));
  }
  if (!anchor) {
    if (alpha != 1.0) throw ContractViolation("fuse: alpha must be 1 when the anchor is absent");
    return std::clamp(l_phys, 0.0, capacity.value());
  }
  return std::clamp(alpha * l_phys + (1.0 - alpha) * *anchor, 0.0, capacity.value());
}

double disagreement(double anchor, double l_phys) { return std::abs(anchor - l_phys); }

}  // namespace loadest
