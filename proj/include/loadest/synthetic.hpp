#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "loadest/core.hpp"
#include "loadest/poi.hpp"

namespace loadest {

struct ApcNoiseConfig {
  // Each passenger is miscounted with this probability; a miscounted
  // passenger is missed with probability undercount_share, else counted twice.
  double board_miscount_prob = 0.12;
  double alight_miscount_prob = 0.18;
  double undercount_share = 0.7;

  // Per-trip counting gain of each door sensor: raw counts are scaled by
  // exp(gain_sigma * N(0,1)), drawn once per trip for boarding and alighting.
  double gain_sigma = 0.2;

  // Additive per-stop spikes.
  double spike_prob = 0.03;
  int spike_min = 15;
  int spike_max = 40;
  double spike_alight_share = 0.3;

  // Trip-level cold start: the counter misses every boarding on the first f stops.
  double cold_start_prob = 0.15;
  int cold_start_min_stops = 2;
  int cold_start_max_stops = 5;
};

struct SynthConfig {
  int n_trips = 200;
  int stops_min = 17;
  int stops_max = 33;
  int n_routes = 6;
  int stop_type_count = 4;
  int poi_categories = 6;
  double capacity = 80.0;

  // Mean boardings per stop before hour and archetype multipliers.
  double base_board_rate = 4.0;
  std::array<double, 24> hour_profile{};
  std::array<double, 24> device_ratio_per_hour{};

  ApcNoiseConfig apc;

  double wifi_missing_prob = 0.2;
  double anchor_noise_sigma = 0.15;
  // Time-local anchor failures. At each stop outside an episode, an episode
  // starts with anchor_outlier_prob and lasts 1..anchor_outlier_max_stops
  // stops; its device counts are scaled by one factor drawn from
  // [outlier_low_min, outlier_low_max] or [outlier_high_min, outlier_high_max].
  double anchor_outlier_prob = 0.06;
  int anchor_outlier_max_stops = 4;
  double anchor_outlier_low_min = 0.2;
  double anchor_outlier_low_max = 0.5;
  double anchor_outlier_high_min = 2.0;
  double anchor_outlier_high_max = 3.5;

  double weather_missing_prob = 0.02;
  int service_days = 28;
  std::int64_t epoch_start = 1704067200;  // 2024-01-01T00:00:00, a Monday
  std::uint64_t seed = 2024;

  SynthConfig();

  /// Every probability is zeroed; anchors equal round(load / ratio).
  static SynthConfig noiseless();

  void validate() const;
};

struct SynthCorpus {
  std::vector<Trip> trips;
  // Latent archetype per stop id; never visible to the pipeline.
  std::map<std::string, int> stop_archetype;
  PoiTable poi_table;
};

SynthCorpus generate_corpus(const SynthConfig& cfg);

struct TripConsistency {
  std::string trip_id;
  int violations = 0;
  int first_violation_stop = -1;
};

struct ConsistencyReport {
  std::vector<TripConsistency> trips;
  int total_violations = 0;
};

/// Checks mc_load_k = mc_load_{k-1} - mc_alight_k + mc_board_k (mc_load_{-1} = 0),
/// non-negative alighting feasibility, and 0 <= mc_load <= C for every stop.
/// With strict set, any violation raises CorpusInvariantError.
ConsistencyReport label_ground_truth_consistency(const std::vector<Trip>& trips, Capacity capacity,
                                                 bool strict = true);

}  // namespace loadest
