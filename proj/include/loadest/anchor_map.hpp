#pragma once

#include <array>
#include <optional>
#include <vector>

#include "loadest/core.hpp"
#include "loadest/digest.hpp"

namespace loadest {

inline constexpr double kMinDeviceRatio = 0.1;
inline constexpr double kMaxDeviceRatio = 5.0;

struct AnchorPair {
  int hour_bin = 0;
  double load = 0.0;
  double devices = 0.0;
};

/// Hour-stratified persons-per-device ratio turning Wi-Fi counts into load anchors.
struct AnchorMap {
  std::array<double, 24> rho{};
  std::array<int, 24> pairs_per_hour{};
  double global_rho = 0.0;
  // False when training held no usable (load, devices) pair at all.
  bool usable = false;

  /// rho_h * devices, or nullopt when the map is unusable.
  std::optional<double> apply(double devices, int hour_bin) const;
  void add_to(Digest& d) const;
};

/// Ratio of sums per hour bin over pairs with devices > 0, clipped to
/// [0.1, 5.0]. Empty bins take the pooled ratio.
AnchorMap fit_anchor_map_from_pairs(const std::vector<AnchorPair>& pairs);

/// Uses every training stop with wifi_valid = 1 and wifi_count > 0.
AnchorMap fit_anchor_map(const std::vector<const Trip*>& training);

inline std::optional<double> apply_anchor(const AnchorMap& map, double devices, int hour_bin) {
  return map.apply(devices, hour_bin);
}

/// Anchor for one stop event, absent when the stop has no valid Wi-Fi count.
std::optional<double> anchor_for(const AnchorMap& map, const StopEvent& ev);

}  // namespace loadest
