#include "loadest/macro.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace loadest {

void ShiftGateParams::validate() const {
  if (!(min_anchor_fraction >= 0.0 && min_anchor_fraction <= 1.0)) {
    throw InputError("shift gate: min_anchor_fraction must lie in [0,1]");
  }
  if (!(mean_threshold > 0.0) || !(std_threshold > 0.0)) throw InputError("shift gate: thresholds must be positive");
}

void ReweightParams::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("reweight: lambda must be non-negative");
  if (!(omega_max >= 1.0) || !std::isfinite(omega_max)) throw InputError("reweight: omega_max must be at least 1");
}

double median(std::vector<double> values) {
  if (values.empty()) throw InputError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ShiftDecision shift_gate(std::span<const double> states, std::span<const std::optional<double>> anchors,
                         const ShiftGateParams& params) {
  if (states.size() != anchors.size()) throw InputError("shift_gate: state and anchor lengths differ");
  std::vector<double> r;
  for (std::size_t k = 0; k < states.size(); ++k) {
    if (anchors[k]) r.push_back(*anchors[k] - states[k]);
  }
  ShiftDecision out;
  out.anchored = static_cast<int>(r.size());
  if (r.empty()) return out;

  double sum = 0.0;
  for (double v : r) sum += v;
  out.mean = sum / static_cast<double>(r.size());
  if (r.size() >= 2) {
    double ss = 0.0;
    for (double v : r) ss += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(ss / static_cast<double>(r.size() - 1));
  }
  if (out.anchored < kMinAnchoredForShift) return out;

  const double fraction = static_cast<double>(r.size()) / static_cast<double>(states.size());
  out.gate = fraction >= params.min_anchor_fraction && std::abs(out.mean) > params.mean_threshold &&
             out.stddev < params.std_threshold;
  if (out.gate) out.delta = median(r);
  return out;
}

ShiftDecision shift_gate(const Trajectory& trajectory, const ShiftGateParams& params) {
  std::vector<double> states;
  std::vector<std::optional<double>> anchors;
  states.reserve(trajectory.size());
  anchors.reserve(trajectory.size());
  for (const StepTrace& s : trajectory.steps) {
    states.push_back(s.l_fused);
    anchors.push_back(s.anchor);
  }
  return shift_gate(states, anchors, params);
}

std::vector<double> apply_shift(std::span<const double> states, bool gate, double delta, Capacity capacity) {
  std::vector<double> out(states.begin(), states.end());
  if (!gate) return out;
  for (double& v : out) v = std::min(std::max(v + delta, 0.0), capacity.value());
  return out;
}

void apply_shift_probe(Trajectory& trajectory, const ShiftGateParams& params, Capacity capacity) {
  const ShiftDecision d = shift_gate(trajectory, params);
  std::vector<double> states;
  states.reserve(trajectory.size());
  for (const StepTrace& s : trajectory.steps) states.push_back(s.l_fused);
  trajectory.l_final = apply_shift(states, d.gate, d.delta, capacity);
  trajectory.shift_gated = d.gate;
  trajectory.shift_delta = d.delta;
}

std::vector<double> compute_reweights(std::span<const double> e_phys, const ReweightParams& params) {
  std::vector<double> out;
  out.reserve(e_phys.size());
  for (double e : e_phys) {
    if (!(e >= 0.0)) throw InputError(fmt::format("compute_reweights: residual {} is negative", e));
    out.push_back(std::min(1.0 + params.lambda * e, params.omega_max));
  }
  return out;
}

std::vector<double> compute_reweights(std::span<const Trajectory> traces, const ReweightParams& params) {
  std::vector<double> e;
  for (const Trajectory& t : traces) {
    for (const StepTrace& s : t.steps) e.push_back(s.e_phys);
  }
  return compute_reweights(e, params);
}

}  // namespace loadest
