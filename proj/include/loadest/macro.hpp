#pragma once

#include <optional>
#include <span>
#include <vector>

#include "loadest/core.hpp"

namespace loadest {

struct ShiftGateParams {
  double min_anchor_fraction = 0.5;
  double mean_threshold = 5.0;  // passengers
  double std_threshold = 4.0;   // passengers

  void validate() const;
};

struct ShiftDecision {
  bool gate = false;
  double delta = 0.0;
  int anchored = 0;
  // Mean and sample std of the drift residuals; 0 when fewer than two samples.
  double mean = 0.0;
  double stddev = 0.0;
};

inline constexpr int kMinAnchoredForShift = 3;

/// Drift residuals r_k = anchor_k - L_k over anchored stops. Fires when enough
/// stops are anchored, |mean r| > mean_threshold and std(r, ddof=1) <
/// std_threshold; delta is the median residual. Fewer than three anchored
/// stops never fire.
ShiftDecision shift_gate(std::span<const double> states, std::span<const std::optional<double>> anchors,
                         const ShiftGateParams& params);
/// Uses l_fused and the anchors recorded in the trace.
ShiftDecision shift_gate(const Trajectory& trajectory, const ShiftGateParams& params);

/// min(max(L + delta * gate, 0), C) elementwise.
std::vector<double> apply_shift(std::span<const double> states, bool gate, double delta, Capacity capacity);

/// Runs the gate on a trajectory and rewrites l_final in place.
void apply_shift_probe(Trajectory& trajectory, const ShiftGateParams& params, Capacity capacity);

struct ReweightParams {
  double lambda = 0.5;
  double omega_max = 5.0;

  void validate() const;
};

/// omega_k = min(1 + lambda * e_k, omega_max).
std::vector<double> compute_reweights(std::span<const double> e_phys, const ReweightParams& params);
std::vector<double> compute_reweights(std::span<const Trajectory> traces, const ReweightParams& params);

double median(std::vector<double> values);

}  // namespace loadest
