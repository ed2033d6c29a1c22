#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loadest/core.hpp"
#include "loadest/poi.hpp"

namespace loadest {

// Raw stream records before alignment onto the stop-event backbone.

struct StopArrival {
  std::string trip_id;
  int stop_index = 0;
  std::string stop_id;
  std::int64_t timestamp = 0;
};

struct ApcRecord {
  std::string trip_id;
  std::int64_t timestamp = 0;
  int board = 0;
  int alight = 0;
};

struct WifiRecord {
  std::string trip_id;
  std::int64_t timestamp = 0;
  int device_count = 0;
};

// Manual counts are taken at the stop and carry its index directly.
struct ManualCountRecord {
  std::string trip_id;
  int stop_index = 0;
  int board = 0;
  int alight = 0;
  int load = 0;
};

struct WeatherRecord {
  std::int64_t timestamp = 0;
  std::vector<double> values;
};

struct RawStreams {
  std::vector<StopArrival> arrivals;
  std::vector<ApcRecord> apc;
  std::vector<WifiRecord> wifi;
  std::vector<ManualCountRecord> manual;
  std::vector<WeatherRecord> weather;
  std::size_t unparseable = 0;

  // Line parsers for comma-separated records. Malformed lines bump
  // `unparseable` and return false.
  //   arrival: trip_id,stop_index,stop_id,timestamp
  //   apc:     trip_id,timestamp,board,alight
  //   wifi:    trip_id,timestamp,device_count
  //   manual:  trip_id,stop_index,board,alight,load
  //   weather: timestamp,v1;v2;...
  bool add_arrival_line(const std::string& line);
  bool add_apc_line(const std::string& line);
  bool add_wifi_line(const std::string& line);
  bool add_manual_line(const std::string& line);
  bool add_weather_line(const std::string& line);
};

struct AlignOptions {
  std::int64_t tolerance_seconds = 60;
  std::int64_t weather_tolerance_seconds = 3600;
  // Offset added to timestamps before deriving the local hour of day.
  std::int64_t utc_offset_seconds = 0;
  // POI vectors are looked up at this radius when a table is supplied.
  const PoiTable* poi_table = nullptr;
  int poi_radius_m = 300;
};

struct AlignStats {
  std::size_t apc_attached = 0;
  std::size_t apc_dropped = 0;
  std::size_t wifi_attached = 0;
  std::size_t wifi_dropped = 0;
  // Weather is a context feed: one record may serve many stops.
  std::size_t stops_with_weather = 0;
  std::size_t stops_without_weather = 0;
  // Records inside the window that lost to a nearer (or earlier) competitor.
  std::size_t conflicts = 0;
  std::size_t unparseable = 0;
  std::size_t stops_without_apc = 0;
  std::size_t stops_without_manual = 0;
};

struct AlignResult {
  std::vector<Trip> trips;
  AlignStats stats;
};

/// Attaches every sensor record to at most one stop event of its trip: the
/// nearest arrival within the tolerance (ties go to the earlier stop). When
/// several records compete for one stop the nearest wins, ties to the earlier
/// record. Output trips are ordered by first arrival, stops by stop_index.
AlignResult align(const RawStreams& streams, const AlignOptions& options = {});

int hour_of_day(std::int64_t timestamp, std::int64_t utc_offset_seconds = 0);
int day_of_week(std::int64_t timestamp, std::int64_t utc_offset_seconds = 0);

}  // namespace loadest
