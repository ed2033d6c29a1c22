#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace loadest {

/// Precomputed POI densities keyed by (stop_id, buffer radius in metres).
class PoiTable {
 public:
  void set(const std::string& stop_id, int radius_m, std::vector<double> densities);
  const std::vector<double>* find(const std::string& stop_id, int radius_m) const;
  bool empty() const noexcept { return rows_.empty(); }
  std::size_t size() const noexcept { return rows_.size(); }

  const std::map<std::pair<std::string, int>, std::vector<double>>& rows() const noexcept { return rows_; }

 private:
  std::map<std::pair<std::string, int>, std::vector<double>> rows_;
};

/// CSV: stop_id,radius_m,densities (densities ';'-separated).
void write_poi_table(std::ostream& out, const PoiTable& table);
PoiTable read_poi_table(std::istream& in);

}  // namespace loadest
