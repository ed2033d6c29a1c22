#include "loadest/projection.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace loadest {

Projection project(double l_prev, double b_hat, double a_hat, Capacity capacity) {
  const double c = capacity.value();
  if (!(l_prev >= 0.0 && l_prev <= c)) {
    throw ContractViolation(fmt::format("project: previous load {} outside [0, {}]", l_prev, c));
  }
  if (!(b_hat >= 0.0) || !(a_hat >= 0.0) || !std::isfinite(b_hat) || !std::isfinite(a_hat)) {
    throw ContractViolation(fmt::format("project: proposals must be finite and non-negative (B={}, A={})", b_hat, a_hat));
  }
  Projection p;
  p.a_star = std::min(a_hat, l_prev);
  p.b_star = std::min(b_hat, c - (l_prev - p.a_star));
  p.l_phys = std::clamp(l_prev - p.a_star + p.b_star, 0.0, c);
  p.e_phys = std::max(0.0, a_hat - p.a_star) + std::max(0.0, b_hat - p.b_star);
  return p;
}

double e_phys_rate(std::span<const double> residuals) {
  if (residuals.empty()) throw InputError("e_phys_rate: empty residual list");
  const auto hits = std::count_if(residuals.begin(), residuals.end(), [](double e) { return e > kResidualEpsilon; });
  return static_cast<double>(hits) / static_cast<double>(residuals.size());
}

double e_phys_rate(std::span<const StepTrace> steps) {
  if (steps.empty()) throw InputError("e_phys_rate: empty trace");
  const auto hits = std::count_if(steps.begin(), steps.end(), [](const StepTrace& s) { return s.e_phys > kResidualEpsilon; });
  return static_cast<double>(hits) / static_cast<double>(steps.size());
}

}  // namespace loadest
