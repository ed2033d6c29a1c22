#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "loadest/abm.hpp"
#include "loadest/anchor_map.hpp"
#include "loadest/context.hpp"
#include "loadest/core.hpp"
#include "loadest/macro.hpp"
#include "loadest/perception.hpp"
#include "loadest/recursion.hpp"
#include "loadest/semantics.hpp"
#include "loadest/trust.hpp"

namespace loadest {

// ---------------------------------------------------------------- splits

struct Fold {
  std::uint64_t seed = 0;
  int fold = 0;
  std::vector<std::size_t> train;  // indices into the trip list, ascending
  std::vector<std::size_t> test;
};

struct SplitPlan {
  std::vector<std::uint64_t> seeds;
  int folds_per_seed = 5;
  std::vector<Fold> folds;  // seed-major
};

/// Seeded Fisher-Yates shuffle of the trip order, then contiguous chunks;
/// the first n % folds chunks take one extra trip. Throws InputError with
/// fewer trips than folds or duplicate ids.
SplitPlan make_splits(const std::vector<std::string>& trip_ids, const std::vector<std::uint64_t>& seeds,
                      int folds = 5);

// ---------------------------------------------------------------- metrics

struct TripMetrics {
  double rmse = 0.0;
  double mae = 0.0;
  double end_ae = 0.0;
};

TripMetrics trip_metrics(std::span<const double> estimate, std::span<const double> truth);

/// Fraction of stops whose projection of the raw APC flows (L_0 = 0) clips.
double apc_inconsistency_rate(const Trip& trip, Capacity capacity);

/// Nearest-rank q-quantile: the ceil(q * n)-th smallest value.
double nearest_rank_quantile(std::vector<double> values, double q);
double fit_tau_bad(const std::vector<const Trip*>& training, double q, Capacity capacity);

inline bool apc_bad_label(double rate, double tau_bad) { return rate > tau_bad; }

// ---------------------------------------------------------------- pipeline

enum class ReweightSource { in_sample, out_of_bag };

struct PipelineConfig {
  Capacity capacity{80.0};
  ContextOptions context;
  int semantic_k = 4;
  int poi_radius_m = 300;
  std::uint64_t semantic_seed = 11;
  ForestParams forest;
  TrustParams trust;
  ShiftGateParams shift;
  ReweightParams reweight;
  ReweightSource reweight_source = ReweightSource::out_of_bag;
  double abm_kappa = 10.0;
  double tau_quantile = 0.75;

  void validate() const;
};

struct TrainingData {
  FeatureMatrix x;
  std::vector<double> board;
  std::vector<double> alight;
  std::vector<std::uint64_t> keys;
  std::vector<std::size_t> offsets;  // first row of each trip, plus a final end marker
};

/// Stable resampling key of one stop event.
std::uint64_t stop_key(const std::string& trip_id, int stop_index);

/// Training rows use the leave-self-out occupancy prior.
TrainingData build_training_data(const std::vector<const Trip*>& training, const ContextBuilder& builder);

struct ClosedLoopResult {
  BaggedTreeRegressor initial;
  BaggedTreeRegressor refit;
  std::vector<double> weights;
};

/// fit(unit weights) -> rule-fusion forward pass over the training trips ->
/// compute_reweights -> fit(weights). One round only.
ClosedLoopResult closed_loop_refit(const std::vector<const Trip*>& training, const TrainingData& data,
                                   const AnchorMap* anchors, const PipelineConfig& config, unsigned threads = 1);

struct FittedArtifacts {
  std::optional<SemanticClusterer> semantics;
  AnchorMap anchor_map;
  ContextBuilder context;
  BaggedTreeRegressor initial_model;
  BaggedTreeRegressor reweighted_model;
  double tau_bad = 0.0;
  AbmRates abm;
  double mean_weight = 1.0;

  std::uint64_t hash() const;
};

/// Fits every train-only component from the given trips and nothing else.
FittedArtifacts fit_artifacts(const std::vector<const Trip*>& training, const PipelineConfig& config,
                              unsigned threads = 1);

// ---------------------------------------------------------------- ablation

enum class Variant { perception_only, phys_only, fixed_fusion, no_reweight, shift_probe, proposed };

inline constexpr std::array<Variant, 6> kAllVariants = {Variant::perception_only, Variant::phys_only,
                                                        Variant::fixed_fusion,    Variant::no_reweight,
                                                        Variant::shift_probe,     Variant::proposed};

std::string_view variant_key(Variant v);
std::string_view variant_label(Variant v);
/// Throws InputError for an unknown key.
Variant parse_variant(std::string_view key);

/// Runs one variant on a test trip with fitted artifacts.
Trajectory run_variant(Variant v, const Trip& trip, const FittedArtifacts& artifacts, const PipelineConfig& config);

enum Metric { kRmse, kMae, kEndAe, kRmseRaw, kShadowInfeas, kEphysRate, kShiftRate, kMetricCount };
inline constexpr std::array<std::string_view, kMetricCount> kMetricNames = {
    "rmse", "mae", "trip_end_ae", "rmse_raw", "shadow_infeas", "ephys_rate", "shift_rate"};

using MetricRow = std::array<double, kMetricCount>;

struct TripRecord {
  std::uint64_t seed = 0;
  int fold = 0;
  Variant variant = Variant::proposed;
  std::string trip_id;
  int n_stops = 0;
  MetricRow metrics{};
  double cum_ephys = 0.0;
  double gating_freq = 0.0;
  double shift_delta = 0.0;
  double apc_rate = 0.0;
  bool apc_bad = false;
};

struct FoldVariantReport {
  Variant variant = Variant::proposed;
  MetricRow all{};
  MetricRow bad{};  // zero when the fold has no bad trips
};

struct FoldReport {
  std::uint64_t seed = 0;
  int fold = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  int n_bad = 0;
  double tau_bad = 0.0;
  std::string artifact_hash;
  std::vector<std::string> bad_trips;
  std::vector<FoldVariantReport> variants;
};

struct Aggregate {
  MetricRow mean{};
  MetricRow std{};
  int n = 0;
};

struct VariantSummary {
  Variant variant = Variant::proposed;
  Aggregate all;
  Aggregate stress;  // folds with at least min_bad_trips bad trips
  std::vector<MetricRow> per_seed;  // mean over the folds of each seed
};

struct EvalConfig {
  PipelineConfig pipeline;
  std::vector<std::uint64_t> seeds{42, 123, 999};
  int folds = 5;
  std::vector<Variant> variants{kAllVariants.begin(), kAllVariants.end()};
  int min_bad_trips = 3;
  // Stops with alpha at or above this count as "anchor gated" in case selection.
  double gating_alpha = 0.75;
  AuditParams audit;

  void validate() const;
};

struct StepRecord {
  std::size_t trip_record = 0;  // index into RunReport::trips
  int stop_index = 0;
  StepTrace step;
  double shadow = 0.0;
  double l_final = 0.0;
  int mc_load = 0;
};

struct RunReport {
  std::vector<std::uint64_t> seeds;
  std::vector<Variant> variants;
  std::vector<FoldReport> folds;
  std::vector<TripRecord> trips;
  std::vector<StepRecord> steps;  // only when traces are requested
  std::vector<VariantSummary> summary;
  int stress_folds = 0;
};

/// Mean and sample std (ddof = 1) of each metric; std is 0 for one row.
Aggregate aggregate(const std::vector<MetricRow>& rows);

/// Throws LeakageError when a training trip id also appears in the test set.
void check_no_leakage(const std::vector<const Trip*>& training, const std::vector<const Trip*>& test);

RunReport run_ablation_matrix(const std::vector<Trip>& corpus, const EvalConfig& config, unsigned threads = 1,
                              bool keep_steps = false);

}  // namespace loadest
