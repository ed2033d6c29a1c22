#include "loadest/context.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "loadest/alignment.hpp"

namespace loadest {

OccupancyPrior OccupancyPrior::fit(const std::vector<const Trip*>& training) {
  OccupancyPrior prior;
  for (const Trip* trip : training) {
    for (const StopEvent& ev : trip->stops) {
      const double load = ev.mc_load;
      auto& cell = prior.cell_[{ev.stop_id, ev.hour_bin}];
      cell.sum += load;
      ++cell.count;
      auto& stop = prior.stop_[ev.stop_id];
      stop.sum += load;
      ++stop.count;
      prior.global_.sum += load;
      ++prior.global_.count;
    }
  }
  return prior;
}

double OccupancyPrior::resolve(const std::string& stop_id, int hour_bin, double own_load, std::size_t own_count) const {
  if (auto it = cell_.find({stop_id, hour_bin}); it != cell_.end() && it->second.count > own_count) {
    return (it->second.sum - own_load) / static_cast<double>(it->second.count - own_count);
  }
  if (auto it = stop_.find(stop_id); it != stop_.end() && it->second.count > own_count) {
    return (it->second.sum - own_load) / static_cast<double>(it->second.count - own_count);
  }
  if (global_.count > own_count) {
    return (global_.sum - own_load) / static_cast<double>(global_.count - own_count);
  }
  return 0.0;
}

double OccupancyPrior::lookup(const std::string& stop_id, int hour_bin) const {
  return resolve(stop_id, hour_bin, 0.0, 0);
}

double OccupancyPrior::lookup_excluding(const std::string& stop_id, int hour_bin, double own_load) const {
  return resolve(stop_id, hour_bin, own_load, 1);
}

void OccupancyPrior::add_to(Digest& d) const {
  d.add(std::string_view("occupancy")).add(global_.sum).add_u64(global_.count);
  for (const auto& [key, acc] : cell_) d.add(key.first).add(key.second).add(acc.sum).add_u64(acc.count);
  for (const auto& [key, acc] : stop_) d.add(key).add(acc.sum).add_u64(acc.count);
}

ContextBuilder ContextBuilder::fit(const std::vector<const Trip*>& training, const ContextOptions& options,
                                   std::optional<SemanticClusterer> semantics) {
  ContextBuilder b;
  b.options_ = options;
  if (options.use_semantics) {
    if (!semantics) throw InputError("context: semantics enabled but no clusterer supplied");
    b.semantics_ = std::move(semantics);
  }
  b.occupancy_ = OccupancyPrior::fit(training);

  if (options.use_weather) {
    std::size_t count = 0;
    for (const Trip* trip : training) {
      for (const StopEvent& ev : trip->stops) {
        if (ev.weather.empty()) continue;
        if (b.weather_means_.empty()) b.weather_means_.assign(ev.weather.size(), 0.0);
        if (ev.weather.size() != b.weather_means_.size()) {
          throw InputError(fmt::format("context: trip {} stop {} has {} weather values, expected {}", ev.trip_id,
                                       ev.stop_index, ev.weather.size(), b.weather_means_.size()));
        }
        for (std::size_t i = 0; i < ev.weather.size(); ++i) b.weather_means_[i] += ev.weather[i];
        ++count;
      }
    }
    for (double& m : b.weather_means_) m /= static_cast<double>(count);
  }

  b.dim_ = 2 + 2 + 7 + 1;
  if (b.semantics_) b.dim_ += static_cast<std::size_t>(b.semantics_->k());
  if (options.use_weather) b.dim_ += b.weather_means_.size() + 1;
  return b;
}

FeatureMatrix ContextBuilder::build(const Trip& trip, bool leave_self_out) const {
  FeatureMatrix out(dim_);
  out.reserve_rows(trip.size());
  std::vector<double> x;
  x.reserve(dim_);
  for (const StopEvent& ev : trip.stops) {
    x.clear();
    x.push_back(ev.apc_board_raw);
    x.push_back(ev.apc_alight_raw);
    const double angle = 2.0 * std::numbers::pi * ev.hour_bin / 24.0;
    x.push_back(std::sin(angle));
    x.push_back(std::cos(angle));
    const int dow = day_of_week(ev.timestamp, options_.utc_offset_seconds);
    for (int d = 0; d < 7; ++d) x.push_back(d == dow ? 1.0 : 0.0);
    if (semantics_) {
      if (ev.poi_density.empty()) {
        throw InputError(fmt::format("context: trip {} stop {} has no POI vector", ev.trip_id, ev.stop_index));
      }
      const int label = semantics_->assign(ev.poi_density);
      for (int c = 0; c < semantics_->k(); ++c) x.push_back(c == label ? 1.0 : 0.0);
    }
    if (options_.use_weather) {
      if (ev.weather.empty()) {
        x.insert(x.end(), weather_means_.begin(), weather_means_.end());
        x.push_back(1.0);
      } else {
        if (ev.weather.size() != weather_means_.size()) {
          throw InputError(fmt::format("context: trip {} stop {} has {} weather values, expected {}", ev.trip_id,
                                       ev.stop_index, ev.weather.size(), weather_means_.size()));
        }
        x.insert(x.end(), ev.weather.begin(), ev.weather.end());
        x.push_back(0.0);
      }
    }
    if (ev.occupancy_prior) {
      x.push_back(*ev.occupancy_prior);
    } else if (leave_self_out) {
      x.push_back(occupancy_.lookup_excluding(ev.stop_id, ev.hour_bin, ev.mc_load));
    } else {
      x.push_back(occupancy_.lookup(ev.stop_id, ev.hour_bin));
    }
    out.append(x);
  }
  return out;
}

std::vector<std::string> ContextBuilder::feature_names() const {
  std::vector<std::string> names = {"apc_board_raw", "apc_alight_raw", "hour_sin", "hour_cos"};
  for (int d = 0; d < 7; ++d) names.push_back(fmt::format("dow_{}", d));
  if (semantics_) {
    for (int c = 0; c < semantics_->k(); ++c) names.push_back(fmt::format("semantic_{}", c));
  }
  if (options_.use_weather) {
    for (std::size_t i = 0; i < weather_means_.size(); ++i) names.push_back(fmt::format("weather_{}", i));
    names.push_back("weather_imputed");
  }
  names.push_back("occupancy_prior");
  return names;
}

void ContextBuilder::add_to(Digest& d) const {
  d.add(std::string_view("context")).add(options_.use_semantics).add(options_.use_weather);
  d.add(static_cast<std::int64_t>(options_.utc_offset_seconds));
  d.add(weather_means_);
  if (semantics_) semantics_->add_to(d);
  occupancy_.add_to(d);
}

}  // namespace loadest
