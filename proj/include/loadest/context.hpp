#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "loadest/core.hpp"
#include "loadest/digest.hpp"
#include "loadest/feature_matrix.hpp"
#include "loadest/semantics.hpp"

namespace loadest {

/// Cross-trip crowding prior: mean training mc_load at (stop_id, hour),
/// falling back to the stop mean and then the overall training mean.
class OccupancyPrior {
 public:
  static OccupancyPrior fit(const std::vector<const Trip*>& training);

  double lookup(const std::string& stop_id, int hour_bin) const;
  /// Same lookup with one observation of `own_load` removed from every level;
  /// used for training rows so a stop never sees its own label.
  double lookup_excluding(const std::string& stop_id, int hour_bin, double own_load) const;

  void add_to(Digest& d) const;

 private:
  struct Acc {
    double sum = 0.0;
    std::size_t count = 0;
  };
  double resolve(const std::string& stop_id, int hour_bin, double own_load, std::size_t own_count) const;

  std::map<std::pair<std::string, int>, Acc> cell_;
  std::map<std::string, Acc> stop_;
  Acc global_;
};

struct ContextOptions {
  bool use_semantics = true;
  bool use_weather = true;
  std::int64_t utc_offset_seconds = 0;
};

/// Builds x_k = [raw boardings, raw alightings, hour sin/cos, day-of-week
/// one-hot, semantic one-hot, weather + imputation flag, occupancy prior].
///
/// The builder never sees anchors: Wi-Fi counts and validity flags are not
/// part of its inputs, so the context cannot carry them.
class ContextBuilder {
 public:
  static ContextBuilder fit(const std::vector<const Trip*>& training, const ContextOptions& options,
                            std::optional<SemanticClusterer> semantics);

  /// One row per stop. With leave_self_out the occupancy prior excludes the
  /// row's own ground truth (training rows only).
  FeatureMatrix build(const Trip& trip, bool leave_self_out = false) const;

  std::size_t dim() const noexcept { return dim_; }
  std::vector<std::string> feature_names() const;
  const std::optional<SemanticClusterer>& semantics() const noexcept { return semantics_; }
  const OccupancyPrior& occupancy() const noexcept { return occupancy_; }

  void add_to(Digest& d) const;

 private:
  ContextOptions options_;
  std::optional<SemanticClusterer> semantics_;
  OccupancyPrior occupancy_;
  std::vector<double> weather_means_;
  std::size_t dim_ = 0;
};

}  // namespace loadest
