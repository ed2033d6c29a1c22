// loadest: synthetic corpora, cross-validated ablations, ABM audits and case
// selection from the command line.
//
// Exit codes: 0 success, 1 internal invariant failure, 2 user or input error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "loadest/anchor_map.hpp"
#include "loadest/config.hpp"
#include "loadest/corpus_io.hpp"
#include "loadest/evaluation.hpp"
#include "loadest/log.hpp"
#include "loadest/parallel.hpp"
#include "loadest/report.hpp"
#include "loadest/synthetic.hpp"

using namespace loadest;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

Config resolve_config(const Common& c) {
  Config cfg = c.config_path.empty() ? Config{} : load_config_file(c.config_path);
  for (const std::string& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw InputError(fmt::format("--set expects section.key=value, got '{}'", o));
    set_config_value(cfg, o.substr(0, eq), o.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

std::vector<Trip> load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot open corpus {}", path));
  CorpusReadResult r = read_corpus(in);
  for (const std::string& w : r.warnings) log_warning(w);
  return std::move(r.trips);
}

void attach_poi(std::vector<Trip>& trips, const std::string& poi_path, int radius) {
  std::ifstream in(poi_path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot open POI table {}", poi_path));
  const PoiTable table = read_poi_table(in);
  for (Trip& t : trips) {
    for (StopEvent& ev : t.stops) {
      const auto* v = table.find(ev.stop_id, radius);
      if (v == nullptr) throw InputError(fmt::format("POI table has no row for stop {} at {} m", ev.stop_id, radius));
      ev.poi_density = *v;
    }
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(fmt::format("cannot write {}", path));
  out << text;
}

int cmd_synth(const Common& common, const std::string& out_path, const std::string& poi_path) {
  const Config cfg = resolve_config(common);
  const SynthCorpus corpus = generate_corpus(cfg.synth);
  label_ground_truth_consistency(corpus.trips, Capacity(cfg.synth.capacity));
  {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw InputError(fmt::format("cannot write {}", out_path));
    write_corpus(out, corpus.trips);
  }
  if (!poi_path.empty()) {
    std::ofstream out(poi_path, std::ios::binary);
    if (!out) throw InputError(fmt::format("cannot write {}", poi_path));
    write_poi_table(out, corpus.poi_table);
  }

  std::size_t stops = 0;
  std::map<std::size_t, int> hist;
  std::vector<const Trip*> all;
  for (const Trip& t : corpus.trips) {
    stops += t.size();
    ++hist[t.size()];
    all.push_back(&t);
  }
  fmt::print("metric,value\ntrips,{}\nstop_events,{}\n\n", corpus.trips.size(), stops);
  fmt::print("stops_per_trip,trips\n");
  for (const auto& [k, n] : hist) fmt::print("{},{}\n", k, n);
  const AnchorMap map = fit_anchor_map(all);
  fmt::print("\nhour,true_ratio,fitted_ratio,pairs\n");
  for (int h = 0; h < 24; ++h) {
    fmt::print("{},{},{},{}\n", h, cfg.synth.device_ratio_per_hour[h], map.rho[h], map.pairs_per_hour[h]);
  }
  return 0;
}

int cmd_eval(const Common& common, const std::string& corpus_path, const std::string& poi_path,
             const std::string& out_dir, const std::string& variants, unsigned threads) {
  Config cfg = resolve_config(common);
  if (!variants.empty()) set_config_value(cfg, "eval.variants", variants);
  std::vector<Trip> trips = load_corpus(corpus_path);
  if (!poi_path.empty()) attach_poi(trips, poi_path, cfg.eval.pipeline.poi_radius_m);
  const RunReport report = run_ablation_matrix(trips, cfg.eval, threads, true);
  write_run_directory(out_dir, report, dump_config(cfg));
  std::cout << format_table(report, false) << '\n' << format_table(report, true);
  return 0;
}

int cmd_audit(const Common& common, const std::string& corpus_path, const std::string& poi_path,
              const std::string& trip_id, const std::string& out_path, unsigned threads) {
  const Config cfg = resolve_config(common);
  std::vector<Trip> trips = load_corpus(corpus_path);
  if (!poi_path.empty()) attach_poi(trips, poi_path, cfg.eval.pipeline.poi_radius_m);
  const Trip* target = nullptr;
  std::vector<const Trip*> train;
  for (const Trip& t : trips) {
    if (t.trip_id == trip_id) {
      target = &t;
    } else {
      train.push_back(&t);
    }
  }
  if (target == nullptr) throw InputError(fmt::format("unknown trip id '{}'", trip_id));
  const FittedArtifacts art = fit_artifacts(train, cfg.eval.pipeline, threads);
  const Trajectory traj = run_variant(Variant::proposed, *target, art, cfg.eval.pipeline);
  const auto rates = rates_for_trip(*target, art.abm);
  const AuditReport rep = audit(traj.l_final, rates, cfg.eval.audit, cfg.eval.pipeline.capacity);
  std::vector<int> truth;
  for (const StopEvent& ev : target->stops) truth.push_back(ev.mc_load);

  std::ostringstream csv;
  write_audit_csv(csv, trip_id, traj.l_final, truth, rep);
  if (out_path.empty()) {
    std::cout << csv.str();
  } else {
    write_text(out_path, csv.str());
  }
  std::cerr << fmt::format("coverage {:.4f}\n", rep.coverage);
  return 0;
}

int cmd_cases(const std::string& run_dir, const std::string& criterion_name, std::size_t n,
              const std::string& variant, const std::string& out_path) {
  const CaseCriterion criterion = parse_case_criterion(criterion_name);
  parse_variant(variant);
  namespace fs = std::filesystem;
  std::ifstream trips_in(fs::path(run_dir) / "trips.csv", std::ios::binary);
  if (!trips_in) throw InputError(fmt::format("no trips.csv in {}", run_dir));
  const auto cases = select_cases(read_trips_csv(trips_in), criterion, variant, n);

  std::cout << "rank,seed,fold,variant,trip_id,score\n";
  std::set<std::string> wanted;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const TripRow& r = cases[i];
    const double score = criterion == CaseCriterion::rmse        ? r.rmse
                         : criterion == CaseCriterion::cum_ephys ? r.cum_ephys
                                                                 : r.gating_freq;
    std::cout << fmt::format("{},{},{},{},{},{}\n", i + 1, r.seed, r.fold, r.variant, r.trip_id, score);
    wanted.insert(fmt::format("{},{},{},{}", r.seed, r.fold, r.variant, r.trip_id));
  }
  if (out_path.empty()) return 0;

  std::ifstream steps_in(fs::path(run_dir) / "steps.csv", std::ios::binary);
  if (!steps_in) throw InputError(fmt::format("no steps.csv in {}", run_dir));
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw InputError(fmt::format("cannot write {}", out_path));
  std::string line;
  std::getline(steps_in, line);
  out << line << '\n';
  while (std::getline(steps_in, line)) {
    std::size_t pos = 0;
    for (int i = 0; i < 4 && pos != std::string::npos; ++i) pos = line.find(',', pos + (i > 0 ? 1 : 0));
    if (pos != std::string::npos && wanted.count(line.substr(0, pos)) != 0) out << line << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop passenger load estimation"};
  app.require_subcommand(1);
  Common common;
  unsigned threads = default_threads();
  std::string corpus;
  std::string poi;
  std::string out;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--set", common.overrides, "Override one value: section.key=value")->take_all();
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  add_common(synth);
  synth->add_option("--out", out, "Corpus file")->required();
  synth->add_option("--poi", poi, "Also write the POI density table here");

  std::string variants;
  auto* eval = app.add_subcommand("eval", "Run the cross-validated ablation matrix");
  add_common(eval);
  eval->add_option("--corpus", corpus, "Corpus file")->required();
  eval->add_option("--poi", poi, "POI table; replaces stop POI vectors at the configured radius");
  eval->add_option("--out", out, "Output directory")->required();
  eval->add_option("--variants", variants, "Comma-separated variant keys");
  eval->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string trip_id;
  auto* aud = app.add_subcommand("audit", "ABM plausibility audit of one held-out trip");
  add_common(aud);
  aud->add_option("--corpus", corpus, "Corpus file")->required();
  aud->add_option("--poi", poi, "POI table");
  aud->add_option("--trip", trip_id, "Trip id to hold out")->required();
  aud->add_option("--out", out, "Envelope CSV (default stdout)");
  aud->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string run_dir;
  std::string criterion = "rmse";
  std::size_t n_cases = 5;
  std::string variant = "proposed";
  auto* cases = app.add_subcommand("cases", "Rank held-out trips for failure-mode inspection");
  cases->add_option("--run", run_dir, "Output directory of eval")->required();
  cases->add_option("--criterion", criterion, "rmse, cum_ephys or gating_freq");
  cases->add_option("--n", n_cases, "Number of trips");
  cases->add_option("--variant", variant, "Variant to rank");
  cases->add_option("--out", out, "Write the selected per-stop traces here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*synth) return cmd_synth(common, out, poi);
    if (*eval) return cmd_eval(common, corpus, poi, out, variants, threads);
    if (*aud) return cmd_audit(common, corpus, poi, trip_id, out, threads);
    if (*cases) return cmd_cases(run_dir, criterion, n_cases, variant, out);
  } catch (const CorpusParseError& e) {
    std::cerr << "error: corpus line " << e.line() << ": " << e.what() << '\n';
    return kExitInput;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const StageError& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitInternal;
}
