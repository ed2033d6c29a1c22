#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "loadest/core.hpp"

namespace loadest {

inline constexpr int kCorpusSchemaVersion = 1;

/// Corpus file layout:
///
///   # loadest-corpus schema_version=1
///   trip_id,stop_index,stop_id,timestamp,hour_bin,apc_board_raw,apc_alight_raw,
///     mc_board,mc_alight,mc_load,wifi_count,wifi_valid,weather,occupancy_prior,poi_density
///   <one line per stop event>
///
/// Vector fields are ';'-separated; absent optionals are empty fields.
void write_corpus(std::ostream& out, const std::vector<Trip>& trips);

class CorpusParseError : public InputError {
 public:
  CorpusParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct CorpusReadResult {
  std::vector<Trip> trips;
  // Non-fatal findings, e.g. ground truth that does not conserve load.
  std::vector<std::string> warnings;
};

/// Trips come back in order of first appearance, stops sorted by stop_index.
CorpusReadResult read_corpus(std::istream& in);

// Shared field helpers for the other line-record formats.
std::vector<std::string> split_fields(const std::string& line, char sep);
std::string join_doubles(const std::vector<double>& xs, char sep = ';');
std::vector<double> parse_doubles(const std::string& field, char sep = ';');
void check_identifier(const std::string& id);

}  // namespace loadest
