#pragma once

#include <string>
#include <vector>

#include "loadest/core.hpp"

namespace testutil {

// Conservation-consistent trip from per-stop (board, alight) truth. Raw APC
// equals truth; every stop is at hour `hour` on stop ids S<k>.
inline loadest::Trip make_trip(const std::string& id, const std::vector<int>& board, const std::vector<int>& alight,
                               int hour = 8) {
  loadest::Trip t;
  t.trip_id = id;
  int load = 0;
  for (std::size_t k = 0; k < board.size(); ++k) {
    loadest::StopEvent ev;
    ev.trip_id = id;
    ev.stop_index = static_cast<int>(k);
    ev.stop_id = "S" + std::to_string(k);
    ev.timestamp = 1704067200 + hour * 3600 + static_cast<long>(k) * 60;
    ev.hour_bin = hour;
    ev.mc_board = board[k];
    ev.mc_alight = alight[k];
    load = load - alight[k] + board[k];
    ev.mc_load = load;
    ev.apc_board_raw = board[k];
    ev.apc_alight_raw = alight[k];
    t.stops.push_back(ev);
  }
  return t;
}

}  // namespace testutil
