#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace loadest {

// Caller supplied malformed or inconsistent data.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A precondition of a pipeline stage was broken by its caller.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Raised by the recursion engine; carries the offending position.
class StageError : public std::runtime_error {
 public:
  StageError(std::string trip_id, int stop_index, const std::string& what);

  const std::string& trip_id() const noexcept { return trip_id_; }
  int stop_index() const noexcept { return stop_index_; }

 private:
  std::string trip_id_;
  int stop_index_;
};

// Ground truth that breaks conservation; indicates a generator bug.
class CorpusInvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A fitted artifact observed data outside the training partition.
class LeakageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Maximum onboard load. Always strictly positive.
class Capacity {
 public:
  explicit Capacity(double value = 80.0);
  double value() const noexcept { return value_; }

 private:
  double value_;
};

/// One aligned stop-service record.
struct StopEvent {
  std::string trip_id;
  int stop_index = 0;
  std::string stop_id;
  std::int64_t timestamp = 0;
  int hour_bin = 0;

  int apc_board_raw = 0;
  int apc_alight_raw = 0;

  int mc_board = 0;
  int mc_alight = 0;
  int mc_load = 0;

  std::optional<int> wifi_count;
  bool wifi_valid = false;

  // Empty when the weather feed had no record for this stop.
  std::vector<double> weather;
  std::optional<double> occupancy_prior;
  std::vector<double> poi_density;
};

struct Trip {
  std::string trip_id;
  std::vector<StopEvent> stops;

  std::size_t size() const noexcept { return stops.size(); }
};

/// Per-stop diagnostic of the agent cascade.
struct StepTrace {
  double b_hat = 0.0;
  double a_hat = 0.0;
  double a_star = 0.0;
  double b_star = 0.0;
  double l_phys = 0.0;
  double e_phys = 0.0;
  // Absent when the stop has no usable anchor.
  std::optional<double> anchor;
  std::optional<double> disagreement;
  std::optional<double> alpha;
  double l_fused = 0.0;

  double effective_alpha() const noexcept { return alpha.value_or(1.0); }
};

struct Trajectory {
  std::string trip_id;
  std::vector<StepTrace> steps;
  std::vector<double> l_final;
  // Unconstrained cumulative sum of the proposals, L_0 = 0.
  std::vector<double> shadow;
  bool shift_gated = false;
  double shift_delta = 0.0;

  std::size_t size() const noexcept { return steps.size(); }
};

/// Unconstrained cumulative load L0 + sum_{t<=k}(b_t - a_t). No clamping.
std::vector<double> shadow_trajectory(std::span<const double> b_hats, std::span<const double> a_hats,
                                      double l0);

/// Fraction of entries outside [0, C]; boundary values are feasible.
double shadow_infeasibility_rate(std::span<const double> shadow, Capacity capacity);

/// Validates the structural StopEvent invariants of a trip. Throws InputError.
void check_trip_structure(const Trip& trip);

}  // namespace loadest
