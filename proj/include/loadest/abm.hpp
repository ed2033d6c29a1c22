#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "loadest/core.hpp"
#include "loadest/digest.hpp"
#include "loadest/semantics.hpp"

namespace loadest {

struct AbmCell {
  double lambda = 0.0;
  double p = 0.0;
  int n = 0;      // stops in the cell
  int n_pos = 0;  // stops with a positive previous load
};

/// Boarding rate and alighting probability per (hour bin, semantic label),
/// shrunk toward the global values with strength kappa.
class AbmRates {
 public:
  double lambda_global() const noexcept { return lambda_global_; }
  double p_global() const noexcept { return p_global_; }
  double kappa() const noexcept { return kappa_; }

  /// Falls back to the global pair for unseen cells.
  AbmCell cell(int hour_bin, int label) const;
  const std::map<std::pair<int, int>, AbmCell>& cells() const noexcept { return cells_; }

  /// Semantic label of a stop (0 without a clusterer).
  int label_of(const StopEvent& ev) const;

  void add_to(Digest& d) const;

  friend AbmRates calibrate_rates(const std::vector<const Trip*>& training, std::optional<SemanticClusterer> semantics,
                                  double kappa);
  /// Direct construction for tests and synthetic audits.
  static AbmRates from_cells(std::map<std::pair<int, int>, AbmCell> cells, double lambda_global, double p_global,
                             double kappa = 0.0, std::optional<SemanticClusterer> semantics = std::nullopt);

 private:
  std::map<std::pair<int, int>, AbmCell> cells_;
  double lambda_global_ = 0.0;
  double p_global_ = 0.0;
  double kappa_ = 0.0;
  std::optional<SemanticClusterer> semantics_;
};

/// lambda_cell = (n * mean B + kappa * lambda_bar) / (n + kappa);
/// p_cell = (n_pos * mean(A / L_prev | L_prev > 0) + kappa * p_bar) / (n_pos + kappa).
/// Throws InputError without training stops.
AbmRates calibrate_rates(const std::vector<const Trip*>& training, std::optional<SemanticClusterer> semantics,
                         double kappa = 10.0);

/// Rates for each stop of a trip.
std::vector<AbmCell> rates_for_trip(const Trip& trip, const AbmRates& rates);

/// Sample paths, row-major n_samples x K. Path i draws from its own stream
/// derived from (seed, i). A ~ Binomial(L_prev, p), then
/// B = min(Poisson(lambda), C - (L_prev - A)).
std::vector<double> simulate(std::span<const AbmCell> stops, int n_samples, std::uint64_t seed, Capacity capacity);

/// W1 between the empirical distribution and a point mass: mean |x - point|.
double w1_point_mass(std::span<const double> samples, double point);

/// Linear-interpolation quantile of a sorted sample.
double sorted_quantile(std::span<const double> sorted, double q);

struct AuditParams {
  int n_samples = 500;
  double shock_w1_threshold = 10.0;
  double lower_q = 0.05;
  double upper_q = 0.95;
  std::uint64_t seed = 7;

  void validate() const;
};

struct AuditReport {
  std::vector<double> w1;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<double> mean;
  std::vector<bool> inside;
  std::vector<bool> shock;
  double coverage = 0.0;
};

/// Scores l_final against the Monte Carlo envelope of the trip's rates.
AuditReport audit(std::span<const double> l_final, std::span<const AbmCell> stops, const AuditParams& params,
                  Capacity capacity);

}  // namespace loadest
