#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "loadest/core.hpp"
#include "loadest/digest.hpp"

namespace loadest {

struct KMeansOptions {
  int max_iterations = 300;
  double relative_tolerance = 1e-4;
  // Independent seedings; the run with the lowest inertia is kept.
  int n_init = 10;
};

/// Nearest-centroid stop labeller over z-scored POI density vectors.
class SemanticClusterer {
 public:
  int k() const noexcept { return static_cast<int>(centroids_.size()); }
  int requested_k() const noexcept { return requested_k_; }
  int radius_m() const noexcept { return radius_m_; }
  std::size_t dim() const noexcept { return mean_.size(); }
  int iterations() const noexcept { return iterations_; }

  /// Index of the nearest centroid; ties go to the lowest index.
  int assign(std::span<const double> poi) const;

  const std::vector<std::vector<double>>& centroids() const noexcept { return centroids_; }
  void add_to(Digest& d) const;

  friend SemanticClusterer fit_semantics_from_vectors(const std::vector<std::vector<double>>& vectors, int k,
                                                      int radius_m, std::uint64_t seed, const KMeansOptions& options);

 private:
  std::vector<double> normalize(std::span<const double> poi) const;

  std::vector<double> mean_;
  std::vector<double> scale_;
  std::vector<std::vector<double>> centroids_;
  int requested_k_ = 0;
  int radius_m_ = 0;
  int iterations_ = 0;
};

/// k-means++ seeding then Lloyd iterations, stopped when the inertia drops by
/// less than relative_tolerance; repeated n_init times. If there are fewer
/// distinct vectors than k, k is reduced to that count and a warning is logged.
SemanticClusterer fit_semantics_from_vectors(const std::vector<std::vector<double>>& vectors, int k, int radius_m,
                                             std::uint64_t seed, const KMeansOptions& options = {});

/// Clusters one POI vector per distinct stop id seen in the training trips.
SemanticClusterer fit_semantics(const std::vector<const Trip*>& training, int k, int radius_m, std::uint64_t seed,
                                const KMeansOptions& options = {});

inline int assign_semantics(const SemanticClusterer& clusterer, std::span<const double> poi) {
  return clusterer.assign(poi);
}

}  // namespace loadest
