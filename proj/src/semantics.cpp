#include "loadest/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>

#include <fmt/format.h>

#include "loadest/log.hpp"
#include "loadest/random.hpp"

namespace loadest {
namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::size_t nearest(const std::vector<std::vector<double>>& centroids, std::span<const double> x, double* dist = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(centroids[c], x);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

}  // namespace

std::vector<double> SemanticClusterer::normalize(std::span<const double> poi) const {
  if (poi.size() != mean_.size()) {
    throw InputError(fmt::format("semantic assign: POI vector has {} entries, clusterer expects {}", poi.size(),
                                 mean_.size()));
  }
  std::vector<double> z(poi.size());
  for (std::size_t i = 0; i < poi.size(); ++i) z[i] = (poi[i] - mean_[i]) / scale_[i];
  return z;
}

int SemanticClusterer::assign(std::span<const double> poi) const {
  const auto z = normalize(poi);
  return static_cast<int>(nearest(centroids_, z));
}

void SemanticClusterer::add_to(Digest& d) const {
  d.add(std::string_view("semantics")).add(requested_k_).add(radius_m_);
  d.add(mean_).add(scale_);
  for (const auto& c : centroids_) d.add(c);
}

SemanticClusterer fit_semantics_from_vectors(const std::vector<std::vector<double>>& vectors, int k, int radius_m,
                                             std::uint64_t seed, const KMeansOptions& options) {
  if (k < 1) throw InputError("fit_semantics: k must be positive");
  if (options.n_init < 1) throw InputError("fit_semantics: n_init must be positive");
  if (vectors.empty()) throw InputError("fit_semantics: no POI vectors");
  const std::size_t dim = vectors.front().size();
  if (dim == 0) throw InputError("fit_semantics: empty POI vectors");
  for (const auto& v : vectors) {
    if (v.size() != dim) throw InputError("fit_semantics: POI vectors differ in dimension");
  }

  SemanticClusterer model;
  model.requested_k_ = k;
  model.radius_m_ = radius_m;
  model.mean_.assign(dim, 0.0);
  model.scale_.assign(dim, 0.0);
  const double n = static_cast<double>(vectors.size());
  for (const auto& v : vectors) {
    for (std::size_t i = 0; i < dim; ++i) model.mean_[i] += v[i] / n;
  }
  for (const auto& v : vectors) {
    for (std::size_t i = 0; i < dim; ++i) model.scale_[i] += (v[i] - model.mean_[i]) * (v[i] - model.mean_[i]) / n;
  }
  for (double& s : model.scale_) s = s > 0.0 ? std::sqrt(s) : 1.0;

  std::vector<std::vector<double>> points;
  points.reserve(vectors.size());
  for (const auto& v : vectors) points.push_back(model.normalize(v));

  const std::set<std::vector<double>> distinct(points.begin(), points.end());
  if (static_cast<std::size_t>(k) > distinct.size()) {
    log_warning(fmt::format("fit_semantics: only {} distinct POI vectors, reducing k from {}", distinct.size(), k));
    k = static_cast<int>(distinct.size());
  }

  // Each restart: k-means++ seeding, then Lloyd iterations. The lowest
  // final inertia wins; ties keep the earlier restart.
  const auto run = [&](std::uint64_t run_seed, std::vector<std::vector<double>>& centroids, int& iterations) {
    Rng rng(run_seed);
    centroids.clear();
    centroids.push_back(points[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(points.size()) - 1))]);
    std::vector<double> d2(points.size());
    while (static_cast<int>(centroids.size()) < k) {
      double total = 0.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        nearest(centroids, points[i], &d2[i]);
        total += d2[i];
      }
      const double target = rng.uniform() * total;
      double acc = 0.0;
      std::size_t pick = points.size();
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
      if (pick == points.size()) {
        // Rounding left the target past the last positive mass.
        for (std::size_t i = points.size(); i-- > 0;) {
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
      centroids.push_back(points[pick]);
    }

    std::vector<std::size_t> label(points.size(), 0);
    double previous = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < options.max_iterations; ++iter) {
      double inertia = 0.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        double d = 0.0;
        label[i] = nearest(centroids, points[i], &d);
        inertia += d;
      }
      std::vector<std::vector<double>> sums(centroids.size(), std::vector<double>(dim, 0.0));
      std::vector<std::size_t> counts(centroids.size(), 0);
      for (std::size_t i = 0; i < points.size(); ++i) {
        ++counts[label[i]];
        for (std::size_t j = 0; j < dim; ++j) sums[label[i]][j] += points[i][j];
      }
      for (std::size_t c = 0; c < centroids.size(); ++c) {
        if (counts[c] == 0) continue;  // empty cluster keeps its centroid
        for (std::size_t j = 0; j < dim; ++j) centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
      }
      iterations = iter + 1;
      if (std::isfinite(previous) && previous - inertia <= options.relative_tolerance * previous) break;
      previous = inertia;
    }
    double inertia = 0.0;
    for (const auto& pt : points) {
      double d = 0.0;
      nearest(centroids, pt, &d);
      inertia += d;
    }
    return inertia;
  };

  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < options.n_init; ++r) {
    std::vector<std::vector<double>> centroids;
    int iterations = 0;
    const double inertia = run(derive_seed(derive_seed(seed, "kmeans++"), static_cast<std::uint64_t>(r)), centroids,
                               iterations);
    if (inertia < best) {
      best = inertia;
      model.centroids_ = std::move(centroids);
      model.iterations_ = iterations;
    }
  }
  return model;
}

SemanticClusterer fit_semantics(const std::vector<const Trip*>& training, int k, int radius_m, std::uint64_t seed,
                                const KMeansOptions& options) {
  // Keyed by stop id so the result does not depend on trip order.
  std::map<std::string, std::vector<double>> per_stop;
  for (const Trip* trip : training) {
    for (const StopEvent& ev : trip->stops) {
      if (!ev.poi_density.empty()) per_stop.try_emplace(ev.stop_id, ev.poi_density);
    }
  }
  if (per_stop.empty()) throw InputError("fit_semantics: training trips carry no POI vectors");
  std::vector<std::vector<double>> vectors;
  vectors.reserve(per_stop.size());
  for (auto& [id, v] : per_stop) vectors.push_back(v);
  return fit_semantics_from_vectors(vectors, k, radius_m, seed, options);
}

}  // namespace loadest
