#include "loadest/anchor_map.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace loadest {

std::optional<double> AnchorMap::apply(double devices, int hour_bin) const {
  if (!usable) return std::nullopt;
  if (hour_bin < 0 || hour_bin > 23) throw InputError(fmt::format("apply_anchor: hour {} outside [0,23]", hour_bin));
  if (devices < 0.0) throw InputError("apply_anchor: negative device count");
  return rho[hour_bin] * devices;
}

void AnchorMap::add_to(Digest& d) const {
  d.add(std::string_view("anchor_map")).add(usable).add(global_rho);
  for (int h = 0; h < 24; ++h) d.add(rho[h]).add(pairs_per_hour[h]);
}

AnchorMap fit_anchor_map_from_pairs(const std::vector<AnchorPair>& pairs) {
  std::array<double, 24> load{};
  std::array<double, 24> devices{};
  AnchorMap map;
  double total_load = 0.0;
  double total_devices = 0.0;
  for (const AnchorPair& p : pairs) {
    if (p.hour_bin < 0 || p.hour_bin > 23) throw InputError("fit_anchor_map: hour outside [0,23]");
    if (!(p.devices > 0.0)) continue;
    load[p.hour_bin] += p.load;
    devices[p.hour_bin] += p.devices;
    ++map.pairs_per_hour[p.hour_bin];
    total_load += p.load;
    total_devices += p.devices;
  }
  if (!(total_devices > 0.0)) {
    map.usable = false;
    return map;
  }
  map.usable = true;
  map.global_rho = std::clamp(total_load / total_devices, kMinDeviceRatio, kMaxDeviceRatio);
  for (int h = 0; h < 24; ++h) {
    map.rho[h] = devices[h] > 0.0 ? std::clamp(load[h] / devices[h], kMinDeviceRatio, kMaxDeviceRatio) : map.global_rho;
  }
  return map;
}

AnchorMap fit_anchor_map(const std::vector<const Trip*>& training) {
  std::vector<AnchorPair> pairs;
  for (const Trip* trip : training) {
    for (const StopEvent& ev : trip->stops) {
      if (ev.wifi_valid && ev.wifi_count && *ev.wifi_count > 0) {
        pairs.push_back({ev.hour_bin, static_cast<double>(ev.mc_load), static_cast<double>(*ev.wifi_count)});
      }
    }
  }
  return fit_anchor_map_from_pairs(pairs);
}

std::optional<double> anchor_for(const AnchorMap& map, const StopEvent& ev) {
  if (!ev.wifi_valid || !ev.wifi_count) return std::nullopt;
  return map.apply(static_cast<double>(*ev.wifi_count), ev.hour_bin);
}

}  // namespace loadest
