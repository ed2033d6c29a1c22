#pragma once

#include <span>

#include "loadest/core.hpp"

namespace loadest {

/// Residuals at or below this count as zero when classifying stops.
inline constexpr double kResidualEpsilon = 1e-9;

struct Projection {
  double a_star = 0.0;
  double b_star = 0.0;
  double l_phys = 0.0;
  double e_phys = 0.0;
};

/// Physical agent. Clips alighting to the onboard load first, then lets
/// boarding use whatever capacity remains; e_phys is the total clipped mass.
/// Throws ContractViolation when l_prev is outside [0, C] or a proposal is
/// negative.
Projection project(double l_prev, double b_hat, double a_hat, Capacity capacity);

/// Fraction of stops with e_phys > kResidualEpsilon.
double e_phys_rate(std::span<const StepTrace> steps);
double e_phys_rate(std::span<const double> residuals);

}  // namespace loadest
