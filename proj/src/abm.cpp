#include "loadest/abm.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "loadest/random.hpp"

namespace loadest {

AbmCell AbmRates::cell(int hour_bin, int label) const {
  const auto it = cells_.find({hour_bin, label});
  if (it != cells_.end()) return it->second;
  return {lambda_global_, p_global_, 0, 0};
}

int AbmRates::label_of(const StopEvent& ev) const {
  if (!semantics_ || ev.poi_density.empty()) return 0;
  return semantics_->assign(ev.poi_density);
}

void AbmRates::add_to(Digest& d) const {
  d.add(std::string_view("abm")).add(lambda_global_).add(p_global_).add(kappa_).add_u64(cells_.size());
  for (const auto& [key, c] : cells_) d.add(key.first).add(key.second).add(c.lambda).add(c.p).add(c.n).add(c.n_pos);
}

AbmRates AbmRates::from_cells(std::map<std::pair<int, int>, AbmCell> cells, double lambda_global, double p_global,
                              double kappa, std::optional<SemanticClusterer> semantics) {
  AbmRates r;
  r.cells_ = std::move(cells);
  r.lambda_global_ = lambda_global;
  r.p_global_ = p_global;
  r.kappa_ = kappa;
  r.semantics_ = std::move(semantics);
  return r;
}

AbmRates calibrate_rates(const std::vector<const Trip*>& training, std::optional<SemanticClusterer> semantics,
                         double kappa) {
  if (!(kappa >= 0.0)) throw InputError("calibrate_rates: kappa must be non-negative");
  AbmRates rates;
  rates.kappa_ = kappa;
  rates.semantics_ = std::move(semantics);

  struct Acc {
    double board = 0.0;
    int n = 0;
    double ratio = 0.0;
    int n_pos = 0;
  };
  std::map<std::pair<int, int>, Acc> acc;
  Acc global;
  for (const Trip* trip : training) {
    int l_prev = 0;
    for (const StopEvent& ev : trip->stops) {
      Acc& a = acc[{ev.hour_bin, rates.label_of(ev)}];
      a.board += ev.mc_board;
      ++a.n;
      global.board += ev.mc_board;
      ++global.n;
      if (l_prev > 0) {
        const double ratio = static_cast<double>(ev.mc_alight) / l_prev;
        a.ratio += ratio;
        ++a.n_pos;
        global.ratio += ratio;
        ++global.n_pos;
      }
      l_prev = ev.mc_load;
    }
  }
  if (global.n == 0) throw InputError("calibrate_rates: no training stops");
  rates.lambda_global_ = global.board / global.n;
  rates.p_global_ = global.n_pos > 0 ? std::clamp(global.ratio / global.n_pos, 0.0, 1.0) : 0.0;

  for (const auto& [key, a] : acc) {
    AbmCell c;
    c.n = a.n;
    c.n_pos = a.n_pos;
    c.lambda = (a.board + kappa * rates.lambda_global_) / (a.n + kappa);
    c.p = a.n_pos + kappa > 0.0 ? std::clamp((a.ratio + kappa * rates.p_global_) / (a.n_pos + kappa), 0.0, 1.0)
                                : rates.p_global_;
    rates.cells_[key] = c;
  }
  return rates;
}

std::vector<AbmCell> rates_for_trip(const Trip& trip, const AbmRates& rates) {
  std::vector<AbmCell> out;
  out.reserve(trip.size());
  for (const StopEvent& ev : trip.stops) out.push_back(rates.cell(ev.hour_bin, rates.label_of(ev)));
  return out;
}

std::vector<double> simulate(std::span<const AbmCell> stops, int n_samples, std::uint64_t seed, Capacity capacity) {
  if (n_samples < 1) throw InputError("simulate: n_samples must be positive");
  const std::size_t k_stops = stops.size();
  const double c = capacity.value();
  std::vector<double> out(static_cast<std::size_t>(n_samples) * k_stops);
  for (int i = 0; i < n_samples; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    double load = 0.0;
    for (std::size_t k = 0; k < k_stops; ++k) {
      const double a = static_cast<double>(rng.binomial(static_cast<int>(load), stops[k].p));
      const double room = c - (load - a);
      const double b = std::min(static_cast<double>(rng.poisson(stops[k].lambda)), std::floor(room));
      load = load - a + b;
      out[static_cast<std::size_t>(i) * k_stops + k] = load;
    }
  }
  return out;
}

double w1_point_mass(std::span<const double> samples, double point) {
  if (samples.empty()) throw InputError("w1_point_mass: no samples");
  double sum = 0.0;
  for (double x : samples) sum += std::abs(x - point);
  return sum / static_cast<double>(samples.size());
}

double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw InputError("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

void AuditParams::validate() const {
  if (n_samples < 1) throw InputError("audit: n_samples must be positive");
  if (!(shock_w1_threshold >= 0.0)) throw InputError("audit: shock threshold must be non-negative");
  if (!(lower_q >= 0.0 && lower_q <= upper_q && upper_q <= 1.0)) throw InputError("audit: bad envelope quantiles");
}

AuditReport audit(std::span<const double> l_final, std::span<const AbmCell> stops, const AuditParams& params,
                  Capacity capacity) {
  params.validate();
  if (l_final.size() != stops.size()) throw InputError("audit: trajectory and rate lengths differ");
  const std::size_t k_stops = stops.size();
  const auto n = static_cast<std::size_t>(params.n_samples);
  const std::vector<double> paths = simulate(stops, params.n_samples, params.seed, capacity);

  AuditReport r;
  std::vector<double> column(n);
  std::size_t covered = 0;
  for (std::size_t k = 0; k < k_stops; ++k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = paths[i * k_stops + k];
      sum += column[i];
    }
    const double w1 = w1_point_mass(column, l_final[k]);
    std::sort(column.begin(), column.end());
    const double lo = sorted_quantile(column, params.lower_q);
    const double hi = sorted_quantile(column, params.upper_q);
    const bool inside = l_final[k] >= lo && l_final[k] <= hi;
    covered += inside ? 1 : 0;
    r.w1.push_back(w1);
    r.lower.push_back(lo);
    r.upper.push_back(hi);
    r.mean.push_back(sum / static_cast<double>(n));
    r.inside.push_back(inside);
    r.shock.push_back(!inside && w1 > params.shock_w1_threshold);
  }
  r.coverage = k_stops == 0 ? 1.0 : static_cast<double>(covered) / static_cast<double>(k_stops);
  return r;
}

}  // namespace loadest
