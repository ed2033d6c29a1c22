#include "loadest/report.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include <fmt/format.h>

#include "loadest/corpus_io.hpp"

namespace loadest {
namespace {

// Display width of a UTF-8 string (code points).
std::size_t width(const std::string& s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
}

std::string pad(const std::string& s, std::size_t w, bool left) {
  const std::size_t n = width(s);
  if (n >= w) return s;
  return left ? s + std::string(w - n, ' ') : std::string(w - n, ' ') + s;
}

std::string cell(double mean, double sd, double scale) { return fmt::format("{:.2f} ± {:.2f}", mean * scale, sd * scale); }

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(fmt::format("cannot write {}", path.string()));
  out << content;
  if (!out) throw InputError(fmt::format("write failed for {}", path.string()));
}

}  // namespace

std::string format_table(const RunReport& report, bool stress) {
  const std::vector<std::string> header = {"Method",           "RMSE",
                                           "MAE",              "Trip-end AE",
                                           "Shadow infeas. (%)", "e_phys rate (%)",
                                           "Shift rate (%)"};
  const std::array<Metric, 6> cols = {kRmse, kMae, kEndAe, kShadowInfeas, kEphysRate, kShiftRate};
  std::vector<std::vector<std::string>> rows;
  rows.push_back(header);
  for (const VariantSummary& s : report.summary) {
    const Aggregate& a = stress ? s.stress : s.all;
    std::vector<std::string> row{std::string(variant_label(s.variant))};
    for (Metric m : cols) {
      const double scale = (m == kShadowInfeas || m == kEphysRate || m == kShiftRate) ? 100.0 : 1.0;
      row.push_back(a.n == 0 ? std::string("n/a") : cell(a.mean[m], a.std[m], scale));
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> w(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) w[i] = std::max(w[i], width(row[i]));
  }
  std::string out;
  const int n_folds = stress ? report.stress_folds : static_cast<int>(report.folds.size());
  out += stress ? fmt::format("APC-bad subset, mean ± std across {} qualifying folds\n", n_folds)
                : fmt::format("All trips, mean ± std across {} folds\n", n_folds);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t i = 0; i < rows[r].size(); ++i) {
      if (i > 0) line += "  ";
      line += pad(rows[r][i], w[i], i == 0);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t x : w) total += x;
      out += std::string(total + 2 * (w.size() - 1), '-') + '\n';
    }
  }
  return out;
}

void write_summary_csv(std::ostream& out, const RunReport& report) {
  out << "variant,subset,n_folds";
  for (auto name : kMetricNames) out << ',' << name << "_mean," << name << "_std";
  out << '\n';
  for (const VariantSummary& s : report.summary) {
    for (int stress = 0; stress < 2; ++stress) {
      const Aggregate& a = stress ? s.stress : s.all;
      out << variant_key(s.variant) << ',' << (stress ? "apc_bad" : "all") << ',' << a.n;
      for (std::size_t m = 0; m < kMetricCount; ++m) out << fmt::format(",{},{}", a.mean[m], a.std[m]);
      out << '\n';
    }
    for (std::size_t i = 0; i < s.per_seed.size(); ++i) {
      out << variant_key(s.variant) << ",seed_" << report.seeds[i] << ",";
      int n = 0;
      for (const FoldReport& f : report.folds) n += f.seed == report.seeds[i] ? 1 : 0;
      out << n;
      for (std::size_t m = 0; m < kMetricCount; ++m) out << fmt::format(",{},", s.per_seed[i][m]);
      out << '\n';
    }
  }
}

void write_folds_csv(std::ostream& out, const RunReport& report) {
  out << "seed,fold,n_train,n_test,n_bad,tau_bad,artifact_hash,variant,subset";
  for (auto name : kMetricNames) out << ',' << name;
  out << '\n';
  for (const FoldReport& f : report.folds) {
    for (const FoldVariantReport& v : f.variants) {
      for (int stress = 0; stress < 2; ++stress) {
        out << fmt::format("{},{},{},{},{},{},{},{},{}", f.seed, f.fold, f.n_train, f.n_test, f.n_bad, f.tau_bad,
                           f.artifact_hash, variant_key(v.variant), stress ? "apc_bad" : "all");
        const MetricRow& row = stress ? v.bad : v.all;
        for (double x : row) out << fmt::format(",{}", x);
        out << '\n';
      }
    }
  }
}

void write_trips_csv(std::ostream& out, const RunReport& report) {
  out << "seed,fold,variant,trip_id,n_stops";
  for (auto name : kMetricNames) out << ',' << name;
  out << ",cum_ephys,gating_freq,shift_delta,apc_rate,apc_bad\n";
  for (const TripRecord& r : report.trips) {
    out << fmt::format("{},{},{},{},{}", r.seed, r.fold, variant_key(r.variant), r.trip_id, r.n_stops);
    for (double x : r.metrics) out << fmt::format(",{}", x);
    out << fmt::format(",{},{},{},{},{}\n", r.cum_ephys, r.gating_freq, r.shift_delta, r.apc_rate, r.apc_bad ? 1 : 0);
  }
}

void write_steps_csv(std::ostream& out, const RunReport& report) {
  out << "seed,fold,variant,trip_id,stop_index,b_hat,a_hat,a_star,b_star,l_phys,e_phys,anchor,disagreement,alpha,"
         "l_fused,l_final,shadow,mc_load\n";
  const auto opt = [](const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); };
  for (const StepRecord& s : report.steps) {
    const TripRecord& r = report.trips[s.trip_record];
    const StepTrace& t = s.step;
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.seed, r.fold, variant_key(r.variant),
                       r.trip_id, s.stop_index, t.b_hat, t.a_hat, t.a_star, t.b_star, t.l_phys, t.e_phys,
                       opt(t.anchor), opt(t.disagreement), opt(t.alpha), t.l_fused, s.l_final, s.shadow, s.mc_load);
  }
}

void write_audit_csv(std::ostream& out, const std::string& trip_id, const std::vector<double>& l_final,
                     const std::vector<int>& truth, const AuditReport& report) {
  out << "trip_id,stop_index,l_final,mc_load,abm_mean,lower,upper,w1,inside,shock\n";
  for (std::size_t k = 0; k < l_final.size(); ++k) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", trip_id, k, l_final[k], truth[k], report.mean[k],
                       report.lower[k], report.upper[k], report.w1[k], report.inside[k] ? 1 : 0,
                       report.shock[k] ? 1 : 0);
  }
}

void write_run_directory(const std::string& dir, const RunReport& report, const std::string& resolved_config) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw InputError(fmt::format("cannot create output directory {}: {}", dir, ec.message()));
  write_file(root / "config.ini", resolved_config);
  write_file(root / "table_all.txt", format_table(report, false));
  write_file(root / "table_stress.txt", format_table(report, true));
  const auto csv = [&](const char* name, void (*fn)(std::ostream&, const RunReport&)) {
    std::ofstream out(root / name, std::ios::binary);
    if (!out) throw InputError(fmt::format("cannot write {}", (root / name).string()));
    fn(out, report);
  };
  csv("summary.csv", write_summary_csv);
  csv("folds.csv", write_folds_csv);
  csv("trips.csv", write_trips_csv);
  csv("steps.csv", write_steps_csv);
}

std::vector<TripRow> read_trips_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("trips.csv: empty file");
  const auto header = split_fields(line, ',');
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"seed", "fold", "variant", "trip_id", "rmse", "cum_ephys", "gating_freq"}) {
    if (col.count(need) == 0) throw InputError(fmt::format("trips.csv: missing column {}", need));
  }
  std::vector<TripRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_fields(line, ',');
    if (f.size() != header.size()) throw InputError(fmt::format("trips.csv line {}: wrong field count", lineno));
    try {
      TripRow r;
      r.seed = std::stoull(f[col["seed"]]);
      r.fold = std::stoi(f[col["fold"]]);
      r.variant = f[col["variant"]];
      r.trip_id = f[col["trip_id"]];
      r.rmse = std::stod(f[col["rmse"]]);
      r.cum_ephys = std::stod(f[col["cum_ephys"]]);
      r.gating_freq = std::stod(f[col["gating_freq"]]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw InputError(fmt::format("trips.csv line {}: unparseable number", lineno));
    }
  }
  return rows;
}

CaseCriterion parse_case_criterion(const std::string& name) {
  if (name == "rmse") return CaseCriterion::rmse;
  if (name == "cum_ephys") return CaseCriterion::cum_ephys;
  if (name == "gating_freq") return CaseCriterion::gating_freq;
  throw InputError(fmt::format("unknown case criterion '{}' (expected rmse, cum_ephys or gating_freq)", name));
}

std::vector<TripRow> select_cases(std::vector<TripRow> rows, CaseCriterion criterion, const std::string& variant,
                                  std::size_t n) {
  std::erase_if(rows, [&](const TripRow& r) { return r.variant != variant; });
  const auto score = [criterion](const TripRow& r) {
    switch (criterion) {
      case CaseCriterion::rmse: return r.rmse;
      case CaseCriterion::cum_ephys: return r.cum_ephys;
      case CaseCriterion::gating_freq: return r.gating_freq;
    }
    return 0.0;
  };
  std::stable_sort(rows.begin(), rows.end(), [&](const TripRow& a, const TripRow& b) {
    const double sa = score(a);
    const double sb = score(b);
    if (sa != sb) return sa > sb;
    if (a.trip_id != b.trip_id) return a.trip_id < b.trip_id;
    return a.seed < b.seed;
  });
  if (rows.size() > n) rows.resize(n);
  return rows;
}

}  // namespace loadest
