#include "loadest/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "loadest/random.hpp"

namespace loadest {
namespace {

constexpr std::array<double, 24> kDefaultHourProfile = {
    0.2, 0.2, 0.2, 0.2, 0.3, 0.5, 0.9, 1.8, 2.0, 1.4, 1.0, 1.0,
    1.0, 1.0, 1.0, 1.1, 1.4, 1.9, 1.8, 1.2, 0.9, 0.7, 0.5, 0.3};

constexpr std::array<int, 3> kPoiRadii = {200, 300, 400};
constexpr std::array<double, 3> kPoiRadiusScale = {0.45, 1.0, 1.75};

bool in_unit(double p) { return p >= 0.0 && p <= 1.0; }

struct RouteStop {
  std::string stop_id;
  int archetype = 0;
};

struct Route {
  std::vector<RouteStop> stops;
};

// Demand and alighting structure per archetype.
double board_factor(int archetype, int types) { return 0.5 + 1.5 * archetype / std::max(1, types - 1); }
double alight_prob(int archetype, int types) { return 0.08 + 0.12 * archetype / std::max(1, types - 1); }

double poi_profile(int archetype, int category, int types, int categories) {
  double v = 1.0;
  if (category == archetype % categories) v += 10.0;
  if (category == (archetype + types) % categories) v += 4.0;
  return v;
}

int miscount(Rng& rng, int count, double prob, double undercount_share) {
  if (prob <= 0.0) return count;
  int observed = 0;
  for (int i = 0; i < count; ++i) {
    if (rng.uniform() < prob) {
      observed += rng.uniform() < undercount_share ? 0 : 2;
    } else {
      observed += 1;
    }
  }
  return observed;
}

std::vector<double> weather_for(std::uint64_t seed, int day, int hour) {
  Rng day_rng(derive_seed(derive_seed(seed, "weather"), static_cast<std::uint64_t>(day)));
  const double day_offset = 3.0 * day_rng.normal();
  const double rain = day_rng.bernoulli(0.3) ? 1.0 : 0.0;
  const double temperature = 8.0 + 6.0 * std::sin(2.0 * std::numbers::pi * (hour - 9) / 24.0) + day_offset;
  return {std::round(temperature * 10.0) / 10.0, rain};
}

}  // namespace

SynthConfig::SynthConfig() : hour_profile(kDefaultHourProfile) {
  for (int h = 0; h < 24; ++h) {
    device_ratio_per_hour[h] = 1.2 + 0.5 * std::sin(2.0 * std::numbers::pi * (h - 8) / 24.0);
  }
}

SynthConfig SynthConfig::noiseless() {
  SynthConfig cfg;
  cfg.apc = ApcNoiseConfig{};
  cfg.apc.board_miscount_prob = 0.0;
  cfg.apc.alight_miscount_prob = 0.0;
  cfg.apc.spike_prob = 0.0;
  cfg.apc.gain_sigma = 0.0;
  cfg.apc.cold_start_prob = 0.0;
  cfg.wifi_missing_prob = 0.0;
  cfg.anchor_noise_sigma = 0.0;
  cfg.anchor_outlier_prob = 0.0;
  cfg.weather_missing_prob = 0.0;
  return cfg;
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) { throw InputError("synth config: " + msg); };
  if (n_trips <= 0) fail("n_trips must be positive");
  if (stops_min < 1 || stops_max < stops_min) fail("stops range must satisfy 1 <= stops_min <= stops_max");
  if (n_routes < 1) fail("n_routes must be positive");
  if (stop_type_count < 2) fail("stop_type_count must be at least 2");
  if (poi_categories < 1) fail("poi_categories must be positive");
  if (!(capacity > 0.0)) fail("capacity must be positive");
  if (!(base_board_rate >= 0.0)) fail("base_board_rate must be non-negative");
  for (double v : hour_profile) {
    if (!(v > 0.0)) fail("hour_profile entries must be positive");
  }
  for (double v : device_ratio_per_hour) {
    if (!(v >= 0.1 && v <= 5.0)) fail("device_ratio_per_hour entries must lie in [0.1, 5.0]");
  }
  for (double p : {apc.board_miscount_prob, apc.alight_miscount_prob, apc.undercount_share, apc.spike_prob,
                   apc.spike_alight_share, apc.cold_start_prob, wifi_missing_prob, anchor_outlier_prob,
                   weather_missing_prob}) {
    if (!in_unit(p)) fail("probabilities must lie in [0, 1]");
  }
  if (apc.spike_min < 0 || apc.spike_max < apc.spike_min) fail("spike magnitude range invalid");
  if (apc.cold_start_min_stops < 0 || apc.cold_start_max_stops < apc.cold_start_min_stops) {
    fail("cold start range invalid");
  }
  if (!(anchor_noise_sigma >= 0.0)) fail("anchor_noise_sigma must be non-negative");
  if (!(apc.gain_sigma >= 0.0) || !std::isfinite(apc.gain_sigma)) fail("gain_sigma must be non-negative");
  if (!(anchor_outlier_low_min >= 0.0 && anchor_outlier_low_max >= anchor_outlier_low_min &&
        anchor_outlier_high_max >= anchor_outlier_high_min && anchor_outlier_high_min >= 0.0)) {
    fail("anchor outlier factor ranges invalid");
  }
  if (anchor_outlier_max_stops < 1) fail("anchor_outlier_max_stops must be positive");
  if (service_days < 1) fail("service_days must be positive");
}

SynthCorpus generate_corpus(const SynthConfig& cfg) {
  cfg.validate();
  const Capacity capacity(cfg.capacity);
  const int types = cfg.stop_type_count;
  SynthCorpus corpus;

  std::vector<Route> routes(cfg.n_routes);
  {
    Rng rng(derive_seed(cfg.seed, "routes"));
    for (int r = 0; r < cfg.n_routes; ++r) {
      const auto length = rng.uniform_int(cfg.stops_min, cfg.stops_max);
      for (std::int64_t k = 0; k < length; ++k) {
        RouteStop stop{fmt::format("R{}S{:02}", r, k), static_cast<int>(rng.uniform_int(0, types - 1))};
        corpus.stop_archetype[stop.stop_id] = stop.archetype;
        for (std::size_t i = 0; i < kPoiRadii.size(); ++i) {
          std::vector<double> densities(cfg.poi_categories);
          for (int c = 0; c < cfg.poi_categories; ++c) {
            const double noise = std::exp(0.25 * rng.normal());
            densities[c] = std::round(kPoiRadiusScale[i] * poi_profile(stop.archetype, c, types, cfg.poi_categories) *
                                      noise * 100.0) / 100.0;
          }
          corpus.poi_table.set(stop.stop_id, kPoiRadii[i], std::move(densities));
        }
        routes[r].stops.push_back(std::move(stop));
      }
    }
  }

  // Trips start in service hours, weighted by demand.
  std::vector<int> start_hours;
  std::vector<double> start_cdf;
  double acc = 0.0;
  for (int h = 5; h <= 22; ++h) {
    acc += cfg.hour_profile[h];
    start_hours.push_back(h);
    start_cdf.push_back(acc);
  }

  const std::uint64_t trip_base = derive_seed(cfg.seed, "trip");
  corpus.trips.reserve(cfg.n_trips);
  for (int i = 0; i < cfg.n_trips; ++i) {
    Rng rng(derive_seed(trip_base, static_cast<std::uint64_t>(i)));
    const Route& route = routes[rng.uniform_int(0, cfg.n_routes - 1)];
    const auto day = static_cast<int>(rng.uniform_int(0, cfg.service_days - 1));
    const double pick = rng.uniform() * acc;
    const auto slot = std::min<std::size_t>(
        std::upper_bound(start_cdf.begin(), start_cdf.end(), pick) - start_cdf.begin(), start_hours.size() - 1);
    const int start_hour = start_hours[slot];
    std::int64_t ts = cfg.epoch_start + static_cast<std::int64_t>(day) * 86400 + start_hour * 3600 +
                      rng.uniform_int(0, 3599);

    const bool cold_start = rng.bernoulli(cfg.apc.cold_start_prob);
    const int cold_stops =
        cold_start ? static_cast<int>(rng.uniform_int(cfg.apc.cold_start_min_stops, cfg.apc.cold_start_max_stops)) : 0;

    const double board_gain = std::exp(cfg.apc.gain_sigma * rng.normal());
    const double alight_gain = std::exp(cfg.apc.gain_sigma * rng.normal());

    Trip trip;
    trip.trip_id = fmt::format("T{:04}", i);
    const int n = static_cast<int>(route.stops.size());
    int load = 0;
    int outlier_left = 0;
    double outlier_factor = 1.0;
    for (int k = 0; k < n; ++k) {
      if (k > 0) ts += rng.uniform_int(60, 180);
      const RouteStop& rs = route.stops[k];
      StopEvent ev;
      ev.trip_id = trip.trip_id;
      ev.stop_index = k;
      ev.stop_id = rs.stop_id;
      ev.timestamp = ts;
      ev.hour_bin = static_cast<int>(((ts % 86400) + 86400) % 86400 / 3600);
      const int ev_day = static_cast<int>((ts - cfg.epoch_start) / 86400);

      const int alight = rng.binomial(load, alight_prob(rs.archetype, types));
      const double lambda = cfg.base_board_rate * cfg.hour_profile[ev.hour_bin] * board_factor(rs.archetype, types);
      const int room = static_cast<int>(std::floor(capacity.value())) - (load - alight);
      const int board = std::min(rng.poisson(lambda), std::max(0, room));
      load = load - alight + board;
      ev.mc_board = board;
      ev.mc_alight = alight;
      ev.mc_load = load;

      ev.apc_board_raw = static_cast<int>(
          std::lround(board_gain * miscount(rng, board, cfg.apc.board_miscount_prob, cfg.apc.undercount_share)));
      ev.apc_alight_raw = static_cast<int>(
          std::lround(alight_gain * miscount(rng, alight, cfg.apc.alight_miscount_prob, cfg.apc.undercount_share)));
      if (rng.bernoulli(cfg.apc.spike_prob)) {
        const auto magnitude = static_cast<int>(rng.uniform_int(cfg.apc.spike_min, cfg.apc.spike_max));
        if (rng.bernoulli(cfg.apc.spike_alight_share)) {
          ev.apc_alight_raw += magnitude;
        } else {
          ev.apc_board_raw += magnitude;
        }
      }
      if (k < cold_stops) ev.apc_board_raw = 0;

      if (!rng.bernoulli(cfg.wifi_missing_prob)) {
        double devices = load / cfg.device_ratio_per_hour[ev.hour_bin];
        if (cfg.anchor_noise_sigma > 0.0) devices *= std::exp(cfg.anchor_noise_sigma * rng.normal());
        if (outlier_left == 0 && rng.bernoulli(cfg.anchor_outlier_prob)) {
          outlier_left = static_cast<int>(rng.uniform_int(1, cfg.anchor_outlier_max_stops));
          outlier_factor = rng.bernoulli(0.5) ? rng.uniform(cfg.anchor_outlier_low_min, cfg.anchor_outlier_low_max)
                                              : rng.uniform(cfg.anchor_outlier_high_min, cfg.anchor_outlier_high_max);
        }
        if (outlier_left > 0) {
          devices *= outlier_factor;
          --outlier_left;
        }
        ev.wifi_count = static_cast<int>(std::lround(devices));
        ev.wifi_valid = true;
      }

      if (!rng.bernoulli(cfg.weather_missing_prob)) ev.weather = weather_for(cfg.seed, ev_day, ev.hour_bin);
      ev.poi_density = *corpus.poi_table.find(rs.stop_id, 300);
      trip.stops.push_back(std::move(ev));
    }
    corpus.trips.push_back(std::move(trip));
  }
  return corpus;
}

ConsistencyReport label_ground_truth_consistency(const std::vector<Trip>& trips, Capacity capacity, bool strict) {
  ConsistencyReport report;
  for (const Trip& trip : trips) {
    TripConsistency tc{trip.trip_id, 0, -1};
    int prev = 0;
    for (const StopEvent& ev : trip.stops) {
      const bool ok = ev.mc_alight <= prev && ev.mc_load == prev - ev.mc_alight + ev.mc_board && ev.mc_load >= 0 &&
                      ev.mc_load <= capacity.value();
      if (!ok) {
        if (tc.first_violation_stop < 0) tc.first_violation_stop = ev.stop_index;
        ++tc.violations;
      }
      prev = ev.mc_load;
    }
    report.total_violations += tc.violations;
    report.trips.push_back(std::move(tc));
  }
  if (strict && report.total_violations > 0) {
    for (const auto& tc : report.trips) {
      if (tc.violations > 0) {
        throw CorpusInvariantError(fmt::format("ground truth violates conservation: trip {} stop {} ({} violations in corpus)",
                                               tc.trip_id, tc.first_violation_stop, report.total_violations));
      }
    }
  }
  return report;
}

}  // namespace loadest
