#include "loadest/core.hpp"

#include <cmath>

#include <fmt/format.h>

namespace loadest {

StageError::StageError(std::string trip_id, int stop_index, const std::string& what)
    : std::runtime_error(fmt::format("trip {} stop {}: {}", trip_id, stop_index, what)),
      trip_id_(std::move(trip_id)),
      stop_index_(stop_index) {}

Capacity::Capacity(double value) : value_(value) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw InputError(fmt::format("capacity must be positive, got {}", value));
  }
}

std::vector<double> shadow_trajectory(std::span<const double> b_hats, std::span<const double> a_hats,
                                      double l0) {
  if (b_hats.size() != a_hats.size()) {
    throw InputError(fmt::format("shadow_trajectory: {} boardings vs {} alightings", b_hats.size(),
                                 a_hats.size()));
  }
  if (l0 < 0.0) throw InputError("shadow_trajectory: negative initial load");
  std::vector<double> out;
  out.reserve(b_hats.size());
  double load = l0;
  for (std::size_t k = 0; k < b_hats.size(); ++k) {
    load += b_hats[k] - a_hats[k];
    out.push_back(load);
  }
  return out;
}

double shadow_infeasibility_rate(std::span<const double> shadow, Capacity capacity) {
  if (shadow.empty()) throw InputError("shadow_infeasibility_rate: empty series");
  std::size_t bad = 0;
  for (double l : shadow) {
    if (l < 0.0 || l > capacity.value()) ++bad;
  }
  return static_cast<double>(bad) / static_cast<double>(shadow.size());
}

void check_trip_structure(const Trip& trip) {
  for (std::size_t k = 0; k < trip.stops.size(); ++k) {
    const StopEvent& ev = trip.stops[k];
    if (ev.stop_index != static_cast<int>(k)) {
      throw InputError(fmt::format("trip {}: stop_index {} at position {} (must be consecutive from 0)",
                                   trip.trip_id, ev.stop_index, k));
    }
    if (ev.trip_id != trip.trip_id) {
      throw InputError(fmt::format("trip {}: foreign stop event from trip {}", trip.trip_id, ev.trip_id));
    }
    if (ev.hour_bin < 0 || ev.hour_bin > 23) {
      throw InputError(fmt::format("trip {} stop {}: hour_bin {} outside [0,23]", trip.trip_id, k, ev.hour_bin));
    }
    if (ev.wifi_valid && !ev.wifi_count) {
      throw InputError(fmt::format("trip {} stop {}: wifi_valid without wifi_count", trip.trip_id, k));
    }
    if (ev.apc_board_raw < 0 || ev.apc_alight_raw < 0 || ev.mc_board < 0 || ev.mc_alight < 0 || ev.mc_load < 0 ||
        (ev.wifi_count && *ev.wifi_count < 0)) {
      throw InputError(fmt::format("trip {} stop {}: negative count", trip.trip_id, k));
    }
  }
}

}  // namespace loadest
