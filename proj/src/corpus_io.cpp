#include "loadest/corpus_io.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <map>
#include <ostream>

#include <fmt/format.h>

#include "loadest/poi.hpp"

namespace loadest {
namespace {

constexpr const char* kHeader =
    "trip_id,stop_index,stop_id,timestamp,hour_bin,apc_board_raw,apc_alight_raw,mc_board,mc_alight,mc_load,"
    "wifi_count,wifi_valid,weather,occupancy_prior,poi_density";
constexpr std::size_t kFieldCount = 15;

template <typename T>
T parse_number(const std::string& s, const char* name) {
  T value{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{} || ptr != end || s.empty()) {
    throw InputError(fmt::format("field {}: cannot parse '{}'", name, s));
  }
  return value;
}

// from_chars for double is not available in libstdc++ 11.
double parse_real(const std::string& s, const char* name) {
  if (s.empty()) throw InputError(fmt::format("field {}: empty", name));
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InputError(fmt::format("field {}: cannot parse '{}'", name, s));
  }
  if (used != s.size()) throw InputError(fmt::format("field {}: trailing characters in '{}'", name, s));
  return v;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

CorpusParseError::CorpusParseError(std::size_t line, const std::string& what)
    : InputError(fmt::format("corpus line {}: {}", line, what)), line_(line) {}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string::size_type start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string join_doubles(const std::vector<double>& xs, char sep) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out.push_back(sep);
    out += fmt::format("{}", xs[i]);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& field, char sep) {
  std::vector<double> out;
  if (field.empty()) return out;
  for (const auto& part : split_fields(field, sep)) out.push_back(parse_real(part, "vector"));
  return out;
}

void check_identifier(const std::string& id) {
  if (id.empty() || id.find_first_of(",;\n\r") != std::string::npos) {
    throw InputError(fmt::format("identifier '{}' is empty or contains a separator", id));
  }
}

void write_corpus(std::ostream& out, const std::vector<Trip>& trips) {
  out << "# loadest-corpus schema_version=" << kCorpusSchemaVersion << '\n' << kHeader << '\n';
  for (const Trip& trip : trips) {
    check_identifier(trip.trip_id);
    for (const StopEvent& ev : trip.stops) {
      check_identifier(ev.stop_id);
      out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", ev.trip_id, ev.stop_index, ev.stop_id,
                         ev.timestamp, ev.hour_bin, ev.apc_board_raw, ev.apc_alight_raw, ev.mc_board, ev.mc_alight,
                         ev.mc_load, ev.wifi_count ? fmt::format("{}", *ev.wifi_count) : std::string{},
                         ev.wifi_valid ? 1 : 0, join_doubles(ev.weather),
                         ev.occupancy_prior ? fmt::format("{}", *ev.occupancy_prior) : std::string{},
                         join_doubles(ev.poi_density));
    }
  }
}

CorpusReadResult read_corpus(std::istream& in) {
  CorpusReadResult result;
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw CorpusParseError(1, "empty corpus file");
  ++line_no;
  line = strip_cr(line);
  const std::string tag = "# loadest-corpus schema_version=";
  if (line.rfind(tag, 0) != 0) throw CorpusParseError(line_no, "missing schema header");
  int version = 0;
  try {
    version = parse_number<int>(line.substr(tag.size()), "schema_version");
  } catch (const InputError& e) {
    throw CorpusParseError(line_no, e.what());
  }
  if (version != kCorpusSchemaVersion) {
    throw CorpusParseError(line_no, fmt::format("unsupported schema_version {}", version));
  }
  if (!std::getline(in, line) || strip_cr(line) != kHeader) throw CorpusParseError(line_no + 1, "bad column header");
  ++line_no;

  std::map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_fields(line, ',');
    if (f.size() != kFieldCount) {
      throw CorpusParseError(line_no, fmt::format("expected {} fields, found {}", kFieldCount, f.size()));
    }
    StopEvent ev;
    try {
      ev.trip_id = f[0];
      check_identifier(ev.trip_id);
      ev.stop_index = parse_number<int>(f[1], "stop_index");
      ev.stop_id = f[2];
      check_identifier(ev.stop_id);
      ev.timestamp = parse_number<std::int64_t>(f[3], "timestamp");
      ev.hour_bin = parse_number<int>(f[4], "hour_bin");
      ev.apc_board_raw = parse_number<int>(f[5], "apc_board_raw");
      ev.apc_alight_raw = parse_number<int>(f[6], "apc_alight_raw");
      ev.mc_board = parse_number<int>(f[7], "mc_board");
      ev.mc_alight = parse_number<int>(f[8], "mc_alight");
      ev.mc_load = parse_number<int>(f[9], "mc_load");
      if (!f[10].empty()) ev.wifi_count = parse_number<int>(f[10], "wifi_count");
      const int valid = parse_number<int>(f[11], "wifi_valid");
      if (valid != 0 && valid != 1) throw InputError("field wifi_valid: must be 0 or 1");
      ev.wifi_valid = valid == 1;
      ev.weather = parse_doubles(f[12]);
      if (!f[13].empty()) ev.occupancy_prior = parse_real(f[13], "occupancy_prior");
      ev.poi_density = parse_doubles(f[14]);
      if (ev.hour_bin < 0 || ev.hour_bin > 23) throw InputError("field hour_bin: outside [0,23]");
      if (ev.stop_index < 0) throw InputError("field stop_index: negative");
      if (ev.wifi_valid && !ev.wifi_count) throw InputError("wifi_valid=1 without wifi_count");
      if (ev.apc_board_raw < 0 || ev.apc_alight_raw < 0 || ev.mc_board < 0 || ev.mc_alight < 0 || ev.mc_load < 0 ||
          (ev.wifi_count && *ev.wifi_count < 0)) {
        throw InputError("negative count");
      }
    } catch (const InputError& e) {
      throw CorpusParseError(line_no, e.what());
    }
    auto [it, inserted] = index.try_emplace(ev.trip_id, result.trips.size());
    if (inserted) result.trips.push_back(Trip{ev.trip_id, {}});
    result.trips[it->second].stops.push_back(std::move(ev));
  }

  for (Trip& trip : result.trips) {
    std::stable_sort(trip.stops.begin(), trip.stops.end(),
                     [](const StopEvent& a, const StopEvent& b) { return a.stop_index < b.stop_index; });
    check_trip_structure(trip);
    int prev = 0;
    for (const StopEvent& ev : trip.stops) {
      if (ev.mc_load != prev - ev.mc_alight + ev.mc_board) {
        result.warnings.push_back(
            fmt::format("trip {} stop {}: mc_load does not follow the conservation recursion", trip.trip_id, ev.stop_index));
      }
      prev = ev.mc_load;
    }
  }
  return result;
}

void PoiTable::set(const std::string& stop_id, int radius_m, std::vector<double> densities) {
  rows_[{stop_id, radius_m}] = std::move(densities);
}

const std::vector<double>* PoiTable::find(const std::string& stop_id, int radius_m) const {
  auto it = rows_.find({stop_id, radius_m});
  return it == rows_.end() ? nullptr : &it->second;
}

void write_poi_table(std::ostream& out, const PoiTable& table) {
  out << "stop_id,radius_m,densities\n";
  for (const auto& [key, densities] : table.rows()) {
    out << key.first << ',' << key.second << ',' << join_doubles(densities) << '\n';
  }
}

PoiTable read_poi_table(std::istream& in) {
  PoiTable table;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || strip_cr(line) != "stop_id,radius_m,densities") {
    throw CorpusParseError(1, "POI table: bad header");
  }
  ++line_no;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_fields(line, ',');
    if (f.size() != 3) throw CorpusParseError(line_no, "POI table: expected 3 fields");
    try {
      table.set(f[0], parse_number<int>(f[1], "radius_m"), parse_doubles(f[2]));
    } catch (const InputError& e) {
      throw CorpusParseError(line_no, e.what());
    }
  }
  return table;
}

}  // namespace loadest
