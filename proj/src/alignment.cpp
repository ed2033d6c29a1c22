#include "loadest/alignment.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <optional>

#include <fmt/format.h>

#include "loadest/corpus_io.hpp"

namespace loadest {
namespace {

template <typename T>
std::optional<T> to_int(const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc{} || ptr != end) return std::nullopt;
  return v;
}

std::int64_t distance(std::int64_t a, std::int64_t b) { return a > b ? a - b : b - a; }

struct Candidate {
  std::size_t record = 0;
  std::int64_t gap = 0;
  std::int64_t timestamp = 0;
};

// Nearest stop for one record; ties go to the lower stop index.
std::optional<std::pair<std::size_t, std::int64_t>> nearest_stop(const std::vector<StopArrival>& stops,
                                                                 std::int64_t ts) {
  std::optional<std::pair<std::size_t, std::int64_t>> best;
  for (std::size_t k = 0; k < stops.size(); ++k) {
    const auto gap = distance(stops[k].timestamp, ts);
    if (!best || gap < best->second) best = {k, gap};
  }
  return best;
}

// Resolve competing records per stop: nearest, then earlier timestamp, then input order.
template <typename Record>
void attach(const std::map<std::string, std::size_t>& trip_index,
                                               const std::vector<std::vector<StopArrival>>& trip_stops,
                                               const std::vector<Record>& records, std::int64_t tolerance,
                                               std::vector<std::vector<std::optional<std::size_t>>>& per_trip,
                                               std::size_t& attached, std::size_t& dropped, std::size_t& conflicts) {
  std::vector<std::vector<std::vector<Candidate>>> candidates(trip_stops.size());
  for (std::size_t t = 0; t < trip_stops.size(); ++t) candidates[t].resize(trip_stops[t].size());

  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto it = trip_index.find(records[i].trip_id);
    if (it == trip_index.end()) {
      ++dropped;
      continue;
    }
    const auto nearest = nearest_stop(trip_stops[it->second], records[i].timestamp);
    if (!nearest || nearest->second > tolerance) {
      ++dropped;
      continue;
    }
    candidates[it->second][nearest->first].push_back({i, nearest->second, records[i].timestamp});
  }

  per_trip.assign(trip_stops.size(), {});
  for (std::size_t t = 0; t < trip_stops.size(); ++t) {
    per_trip[t].assign(trip_stops[t].size(), std::nullopt);
    for (std::size_t k = 0; k < trip_stops[t].size(); ++k) {
      auto& list = candidates[t][k];
      if (list.empty()) continue;
      const auto best = std::min_element(list.begin(), list.end(), [](const Candidate& a, const Candidate& b) {
        if (a.gap != b.gap) return a.gap < b.gap;
        if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
        return a.record < b.record;
      });
      per_trip[t][k] = best->record;
      ++attached;
      conflicts += list.size() - 1;
    }
  }
}

}  // namespace

int hour_of_day(std::int64_t timestamp, std::int64_t utc_offset_seconds) {
  const std::int64_t local = timestamp + utc_offset_seconds;
  return static_cast<int>(((local % 86400) + 86400) % 86400 / 3600);
}

int day_of_week(std::int64_t timestamp, std::int64_t utc_offset_seconds) {
  // 1970-01-01 was a Thursday; 0 = Monday.
  const std::int64_t local = timestamp + utc_offset_seconds;
  const std::int64_t days = local >= 0 ? local / 86400 : (local - 86399) / 86400;
  return static_cast<int>(((days + 3) % 7 + 7) % 7);
}

bool RawStreams::add_arrival_line(const std::string& line) {
  const auto f = split_fields(line, ',');
  if (f.size() == 4 && !f[0].empty() && !f[2].empty()) {
    const auto k = to_int<int>(f[1]);
    const auto ts = to_int<std::int64_t>(f[3]);
    if (k && ts && *k >= 0) {
      arrivals.push_back({f[0], *k, f[2], *ts});
      return true;
    }
  }
  ++unparseable;
  return false;
}

bool RawStreams::add_apc_line(const std::string& line) {
  const auto f = split_fields(line, ',');
  if (f.size() == 4 && !f[0].empty()) {
    const auto ts = to_int<std::int64_t>(f[1]);
    const auto b = to_int<int>(f[2]);
    const auto a = to_int<int>(f[3]);
    if (ts && b && a && *b >= 0 && *a >= 0) {
      apc.push_back({f[0], *ts, *b, *a});
      return true;
    }
  }
  ++unparseable;
  return false;
}

bool RawStreams::add_wifi_line(const std::string& line) {
  const auto f = split_fields(line, ',');
  if (f.size() == 3 && !f[0].empty()) {
    const auto ts = to_int<std::int64_t>(f[1]);
    const auto w = to_int<int>(f[2]);
    if (ts && w && *w >= 0) {
      wifi.push_back({f[0], *ts, *w});
      return true;
    }
  }
  ++unparseable;
  return false;
}

bool RawStreams::add_manual_line(const std::string& line) {
  const auto f = split_fields(line, ',');
  if (f.size() == 5 && !f[0].empty()) {
    const auto k = to_int<int>(f[1]);
    const auto b = to_int<int>(f[2]);
    const auto a = to_int<int>(f[3]);
    const auto l = to_int<int>(f[4]);
    if (k && b && a && l && *k >= 0 && *b >= 0 && *a >= 0 && *l >= 0) {
      manual.push_back({f[0], *k, *b, *a, *l});
      return true;
    }
  }
  ++unparseable;
  return false;
}

bool RawStreams::add_weather_line(const std::string& line) {
  const auto f = split_fields(line, ',');
  if (f.size() == 2) {
    const auto ts = to_int<std::int64_t>(f[0]);
    if (ts) {
      try {
        weather.push_back({*ts, parse_doubles(f[1])});
        return true;
      } catch (const InputError&) {
      }
    }
  }
  ++unparseable;
  return false;
}

AlignResult align(const RawStreams& streams, const AlignOptions& options) {
  if (options.tolerance_seconds < 0) throw InputError("align: negative tolerance");
  AlignResult result;
  result.stats.unparseable = streams.unparseable;

  std::map<std::string, std::size_t> trip_index;
  std::vector<std::vector<StopArrival>> trip_stops;
  for (const StopArrival& a : streams.arrivals) {
    auto [it, inserted] = trip_index.try_emplace(a.trip_id, trip_stops.size());
    if (inserted) trip_stops.emplace_back();
    trip_stops[it->second].push_back(a);
  }
  for (auto& stops : trip_stops) {
    std::stable_sort(stops.begin(), stops.end(),
                     [](const StopArrival& a, const StopArrival& b) { return a.stop_index < b.stop_index; });
  }

  std::vector<std::vector<std::optional<std::size_t>>> apc_at;
  std::vector<std::vector<std::optional<std::size_t>>> wifi_at;
  attach(trip_index, trip_stops, streams.apc, options.tolerance_seconds, apc_at, result.stats.apc_attached,
         result.stats.apc_dropped, result.stats.conflicts);
  attach(trip_index, trip_stops, streams.wifi, options.tolerance_seconds, wifi_at, result.stats.wifi_attached,
         result.stats.wifi_dropped, result.stats.conflicts);

  std::map<std::pair<std::string, int>, const ManualCountRecord*> manual;
  for (const auto& m : streams.manual) manual.emplace(std::make_pair(m.trip_id, m.stop_index), &m);

  std::vector<const WeatherRecord*> weather;
  for (const auto& w : streams.weather) weather.push_back(&w);
  std::stable_sort(weather.begin(), weather.end(),
                   [](const WeatherRecord* a, const WeatherRecord* b) { return a->timestamp < b->timestamp; });

  for (std::size_t t = 0; t < trip_stops.size(); ++t) {
    Trip trip;
    trip.trip_id = trip_stops[t].front().trip_id;
    for (std::size_t k = 0; k < trip_stops[t].size(); ++k) {
      const StopArrival& arr = trip_stops[t][k];
      StopEvent ev;
      ev.trip_id = arr.trip_id;
      ev.stop_index = arr.stop_index;
      ev.stop_id = arr.stop_id;
      ev.timestamp = arr.timestamp;
      ev.hour_bin = hour_of_day(arr.timestamp, options.utc_offset_seconds);
      if (apc_at[t][k]) {
        ev.apc_board_raw = streams.apc[*apc_at[t][k]].board;
        ev.apc_alight_raw = streams.apc[*apc_at[t][k]].alight;
      } else {
        ++result.stats.stops_without_apc;
      }
      if (wifi_at[t][k]) {
        ev.wifi_count = streams.wifi[*wifi_at[t][k]].device_count;
        ev.wifi_valid = true;
      }
      if (auto it = manual.find({arr.trip_id, arr.stop_index}); it != manual.end()) {
        ev.mc_board = it->second->board;
        ev.mc_alight = it->second->alight;
        ev.mc_load = it->second->load;
      } else {
        ++result.stats.stops_without_manual;
      }
      if (!weather.empty()) {
        auto it = std::lower_bound(weather.begin(), weather.end(), arr.timestamp,
                                   [](const WeatherRecord* w, std::int64_t ts) { return w->timestamp < ts; });
        const WeatherRecord* best = nullptr;
        if (it != weather.begin()) best = *std::prev(it);
        if (it != weather.end() && (!best || distance((*it)->timestamp, arr.timestamp) <
                                                 distance(best->timestamp, arr.timestamp))) {
          best = *it;
        }
        if (best && distance(best->timestamp, arr.timestamp) <= options.weather_tolerance_seconds) {
          ev.weather = best->values;
          ++result.stats.stops_with_weather;
        } else {
          ++result.stats.stops_without_weather;
        }
      } else {
        ++result.stats.stops_without_weather;
      }
      if (options.poi_table) {
        if (const auto* poi = options.poi_table->find(arr.stop_id, options.poi_radius_m)) ev.poi_density = *poi;
      }
      trip.stops.push_back(std::move(ev));
    }
    check_trip_structure(trip);
    result.trips.push_back(std::move(trip));
  }
  return result;
}

}  // namespace loadest
