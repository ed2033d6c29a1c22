#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "loadest/abm.hpp"
#include "loadest/evaluation.hpp"

namespace loadest {

/// Aligned-column table, one row per variant, "mean ± std" cells.
/// With stress set, the APC-bad subset aggregates are shown instead.
std::string format_table(const RunReport& report, bool stress);

void write_summary_csv(std::ostream& out, const RunReport& report);
void write_folds_csv(std::ostream& out, const RunReport& report);
void write_trips_csv(std::ostream& out, const RunReport& report);
void write_steps_csv(std::ostream& out, const RunReport& report);

void write_audit_csv(std::ostream& out, const std::string& trip_id, const std::vector<double>& l_final,
                     const std::vector<int>& truth, const AuditReport& report);

/// Writes config.ini, table_all.txt, table_stress.txt, summary.csv,
/// folds.csv, trips.csv and steps.csv into dir (created if needed).
void write_run_directory(const std::string& dir, const RunReport& report, const std::string& resolved_config);

/// One row of trips.csv as read back by case selection.
struct TripRow {
  std::uint64_t seed = 0;
  int fold = 0;
  std::string variant;
  std::string trip_id;
  double rmse = 0.0;
  double cum_ephys = 0.0;
  double gating_freq = 0.0;
};

std::vector<TripRow> read_trips_csv(std::istream& in);

enum class CaseCriterion { rmse, cum_ephys, gating_freq };
CaseCriterion parse_case_criterion(const std::string& name);

/// Rows of one variant ranked by the criterion, descending; ties by trip id,
/// then seed. At most n rows.
std::vector<TripRow> select_cases(std::vector<TripRow> rows, CaseCriterion criterion, const std::string& variant,
                                  std::size_t n);

}  // namespace loadest
