#include "loadest/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include <fmt/format.h>

#include "loadest/parallel.hpp"
#include "loadest/projection.hpp"
#include "loadest/random.hpp"

namespace loadest {

SplitPlan make_splits(const std::vector<std::string>& trip_ids, const std::vector<std::uint64_t>& seeds, int folds) {
  if (folds < 2) throw InputError("make_splits: need at least two folds");
  const std::size_t n = trip_ids.size();
  if (n < static_cast<std::size_t>(folds)) {
    throw InputError(fmt::format("make_splits: {} trips cannot fill {} folds", n, folds));
  }
  if (seeds.empty()) throw InputError("make_splits: no seeds");
  std::set<std::string> seen;
  for (const auto& id : trip_ids) {
    if (!seen.insert(id).second) throw InputError(fmt::format("make_splits: duplicate trip id {}", id));
  }

  SplitPlan plan;
  plan.seeds = seeds;
  plan.folds_per_seed = folds;
  const auto f = static_cast<std::size_t>(folds);
  for (std::uint64_t seed : seeds) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
      std::swap(order[i], order[j]);
    }
    std::size_t pos = 0;
    for (std::size_t k = 0; k < f; ++k) {
      const std::size_t size = n / f + (k < n % f ? 1 : 0);
      Fold fold;
      fold.seed = seed;
      fold.fold = static_cast<int>(k);
      fold.test.assign(order.begin() + static_cast<long>(pos), order.begin() + static_cast<long>(pos + size));
      std::sort(fold.test.begin(), fold.test.end());
      std::vector<bool> in_test(n, false);
      for (std::size_t i : fold.test) in_test[i] = true;
      for (std::size_t i = 0; i < n; ++i) {
        if (!in_test[i]) fold.train.push_back(i);
      }
      plan.folds.push_back(std::move(fold));
      pos += size;
    }
  }
  return plan;
}

TripMetrics trip_metrics(std::span<const double> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size()) {
    throw InputError(fmt::format("trip_metrics: {} estimates vs {} truth values", estimate.size(), truth.size()));
  }
  if (estimate.empty()) throw InputError("trip_metrics: empty series");
  double se = 0.0;
  double ae = 0.0;
  for (std::size_t k = 0; k < estimate.size(); ++k) {
    const double d = estimate[k] - truth[k];
    se += d * d;
    ae += std::abs(d);
  }
  const auto n = static_cast<double>(estimate.size());
  return {std::sqrt(se / n), ae / n, std::abs(estimate.back() - truth.back())};
}

double apc_inconsistency_rate(const Trip& trip, Capacity capacity) {
  if (trip.stops.empty()) throw InputError("apc_inconsistency_rate: empty trip");
  double load = 0.0;
  std::size_t hits = 0;
  for (const StopEvent& ev : trip.stops) {
    const Projection p = project(load, ev.apc_board_raw, ev.apc_alight_raw, capacity);
    if (p.e_phys > kResidualEpsilon) ++hits;
    load = p.l_phys;
  }
  return static_cast<double>(hits) / static_cast<double>(trip.size());
}

double nearest_rank_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InputError("quantile of an empty list");
  if (!(q >= 0.0 && q <= 1.0)) throw InputError("quantile level must lie in [0,1]");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  const auto rank = static_cast<std::ptrdiff_t>(std::ceil(q * n)) - 1;
  return values[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(rank, 0, static_cast<std::ptrdiff_t>(values.size()) - 1))];
}

double fit_tau_bad(const std::vector<const Trip*>& training, double q, Capacity capacity) {
  if (training.empty()) throw InputError("fit_tau_bad: no training trips");
  std::vector<double> r;
  r.reserve(training.size());
  for (const Trip* t : training) r.push_back(apc_inconsistency_rate(*t, capacity));
  return nearest_rank_quantile(std::move(r), q);
}

void PipelineConfig::validate() const {
  trust.validate();
  shift.validate();
  reweight.validate();
  forest.validate();
  if (semantic_k < 1) throw InputError("semantic_k must be positive");
  if (poi_radius_m <= 0) throw InputError("poi_radius_m must be positive");
  if (!(abm_kappa >= 0.0)) throw InputError("abm_kappa must be non-negative");
  if (!(tau_quantile >= 0.0 && tau_quantile <= 1.0)) throw InputError("tau_quantile must lie in [0,1]");
}

std::uint64_t stop_key(const std::string& trip_id, int stop_index) {
  Digest d;
  d.add(trip_id).add(stop_index);
  return d.value();
}

TrainingData build_training_data(const std::vector<const Trip*>& training, const ContextBuilder& builder) {
  TrainingData data;
  data.x = FeatureMatrix(builder.dim());
  for (const Trip* trip : training) {
    data.offsets.push_back(data.board.size());
    data.x.append(builder.build(*trip, true));
    for (const StopEvent& ev : trip->stops) {
      data.board.push_back(ev.mc_board);
      data.alight.push_back(ev.mc_alight);
      data.keys.push_back(stop_key(ev.trip_id, ev.stop_index));
    }
  }
  data.offsets.push_back(data.board.size());
  return data;
}

ClosedLoopResult closed_loop_refit(const std::vector<const Trip*>& training, const TrainingData& data,
                                   const AnchorMap* anchors, const PipelineConfig& config, unsigned threads) {
  const std::size_t n = data.board.size();
  const std::vector<double> ones(n, 1.0);
  const bool oob = config.reweight_source == ReweightSource::out_of_bag;
  BaggedTreeRegressor::OobFlows oob_flows;
  ClosedLoopResult out;
  out.initial = BaggedTreeRegressor::fit(data.x, data.board, data.alight, ones, data.keys, config.forest, threads,
                                         oob ? &oob_flows : nullptr);

  std::vector<double> residuals;
  residuals.reserve(n);
  for (std::size_t t = 0; t < training.size(); ++t) {
    const Trip& trip = *training[t];
    const std::size_t begin = data.offsets[t];
    std::vector<FlowProposal> proposals(trip.size());
    for (std::size_t k = 0; k < trip.size(); ++k) {
      proposals[k] = oob ? FlowProposal{oob_flows.board[begin + k], oob_flows.alight[begin + k]}
                         : out.initial.predict(data.x.row(begin + k));
    }
    const auto a = trip_anchors(trip, anchors);
    const Trajectory traj = run_cascade(trip.trip_id, proposals, a, config.trust, config.capacity, FusionMode::rule);
    for (const StepTrace& s : traj.steps) residuals.push_back(s.e_phys);
  }
  out.weights = compute_reweights(residuals, config.reweight);
  if (std::all_of(out.weights.begin(), out.weights.end(), [](double w) { return w == 1.0; })) {
    out.refit = out.initial;
  } else {
    out.refit = BaggedTreeRegressor::fit(data.x, data.board, data.alight, out.weights, data.keys, config.forest, threads);
  }
  return out;
}

std::uint64_t FittedArtifacts::hash() const {
  Digest d;
  d.add(semantics.has_value());
  if (semantics) semantics->add_to(d);
  anchor_map.add_to(d);
  context.add_to(d);
  initial_model.add_to(d);
  reweighted_model.add_to(d);
  d.add(tau_bad);
  abm.add_to(d);
  d.add(mean_weight);
  return d.value();
}

FittedArtifacts fit_artifacts(const std::vector<const Trip*>& training, const PipelineConfig& config,
                              unsigned threads) {
  config.validate();
  if (training.empty()) throw InputError("fit_artifacts: no training trips");
  FittedArtifacts art;
  if (config.context.use_semantics) {
    art.semantics = fit_semantics(training, config.semantic_k, config.poi_radius_m, config.semantic_seed);
  }
  art.anchor_map = fit_anchor_map(training);
  art.context = ContextBuilder::fit(training, config.context, art.semantics);
  const TrainingData data = build_training_data(training, art.context);
  ClosedLoopResult loop = closed_loop_refit(training, data, &art.anchor_map, config, threads);
  art.initial_model = std::move(loop.initial);
  art.reweighted_model = std::move(loop.refit);
  double sum = 0.0;
  for (double w : loop.weights) sum += w;
  art.mean_weight = loop.weights.empty() ? 1.0 : sum / static_cast<double>(loop.weights.size());
  art.tau_bad = fit_tau_bad(training, config.tau_quantile, config.capacity);
  art.abm = calibrate_rates(training, art.semantics, config.abm_kappa);
  return art;
}

std::string_view variant_key(Variant v) {
  switch (v) {
    case Variant::perception_only: return "perception_only";
    case Variant::phys_only: return "phys_only";
    case Variant::fixed_fusion: return "fixed_fusion";
    case Variant::no_reweight: return "no_reweight";
    case Variant::shift_probe: return "shift_probe";
    case Variant::proposed: return "proposed";
  }
  return "unknown";
}

std::string_view variant_label(Variant v) {
  switch (v) {
    case Variant::perception_only: return "Perception-only (open-loop)";
    case Variant::phys_only: return "No fusion (phys-only)";
    case Variant::fixed_fusion: return "Fixed fusion (alpha0=0.5)";
    case Variant::no_reweight: return "No reweight (rule; no shift)";
    case Variant::shift_probe: return "With shift probe";
    case Variant::proposed: return "Proposed: rule fusion (no shift)";
  }
  return "unknown";
}

Variant parse_variant(std::string_view key) {
  for (Variant v : kAllVariants) {
    if (variant_key(v) == key) return v;
  }
  throw InputError(fmt::format("unknown variant '{}'", key));
}

namespace {

struct VariantSpec {
  bool reweighted;
  FusionMode mode;
  bool shift;
};

VariantSpec spec_of(Variant v) {
  switch (v) {
    case Variant::perception_only: return {false, FusionMode::perception_only, false};
    case Variant::phys_only: return {true, FusionMode::phys_only, false};
    case Variant::fixed_fusion: return {true, FusionMode::fixed, false};
    case Variant::no_reweight: return {false, FusionMode::rule, false};
    case Variant::shift_probe: return {true, FusionMode::rule, true};
    case Variant::proposed: return {true, FusionMode::rule, false};
  }
  return {true, FusionMode::rule, false};
}

Trajectory run_spec(const VariantSpec& spec, const Trip& trip, std::span<const FlowProposal> proposals,
                    std::span<const std::optional<double>> anchors, const PipelineConfig& config) {
  Trajectory t = run_cascade(trip.trip_id, proposals, anchors, config.trust, config.capacity, spec.mode);
  if (spec.shift) apply_shift_probe(t, config.shift, config.capacity);
  return t;
}

}  // namespace

Trajectory run_variant(Variant v, const Trip& trip, const FittedArtifacts& artifacts, const PipelineConfig& config) {
  const VariantSpec spec = spec_of(v);
  const FeatureMatrix x = artifacts.context.build(trip);
  const BaggedTreeRegressor& model = spec.reweighted ? artifacts.reweighted_model : artifacts.initial_model;
  std::vector<FlowProposal> proposals;
  try {
    proposals = model.predict_trip(trip, x);
  } catch (const std::exception& e) {
    throw StageError(trip.trip_id, 0, std::string("perception: ") + e.what());
  }
  const auto anchors = trip_anchors(trip, &artifacts.anchor_map);
  return run_spec(spec, trip, proposals, anchors, config);
}

void EvalConfig::validate() const {
  pipeline.validate();
  audit.validate();
  if (seeds.empty()) throw InputError("eval: at least one split seed is required");
  if (folds < 2) throw InputError("eval: folds must be at least 2");
  if (variants.empty()) throw InputError("eval: no variants selected");
  if (min_bad_trips < 1) throw InputError("eval: min_bad_trips must be positive");
  if (!(gating_alpha >= 0.0 && gating_alpha <= 1.0)) throw InputError("eval: gating_alpha must lie in [0,1]");
}

Aggregate aggregate(const std::vector<MetricRow>& rows) {
  Aggregate a;
  a.n = static_cast<int>(rows.size());
  if (rows.empty()) return a;
  for (std::size_t m = 0; m < kMetricCount; ++m) {
    double sum = 0.0;
    for (const MetricRow& r : rows) sum += r[m];
    a.mean[m] = sum / static_cast<double>(rows.size());
    if (rows.size() > 1) {
      double ss = 0.0;
      for (const MetricRow& r : rows) ss += (r[m] - a.mean[m]) * (r[m] - a.mean[m]);
      a.std[m] = std::sqrt(ss / static_cast<double>(rows.size() - 1));
    }
  }
  return a;
}

void check_no_leakage(const std::vector<const Trip*>& training, const std::vector<const Trip*>& test) {
  std::unordered_set<std::string> test_ids;
  for (const Trip* t : test) test_ids.insert(t->trip_id);
  for (const Trip* t : training) {
    if (test_ids.count(t->trip_id) != 0) {
      throw LeakageError(fmt::format("trip {} is in both the training and the test partition", t->trip_id));
    }
  }
}

namespace {

struct FoldOutput {
  FoldReport report;
  std::vector<TripRecord> trips;
  std::vector<StepRecord> steps;  // trip_record indexes into `trips`
};

MetricRow mean_rows(const std::vector<const TripRecord*>& records) {
  MetricRow out{};
  if (records.empty()) return out;
  for (const TripRecord* r : records) {
    for (std::size_t m = 0; m < kMetricCount; ++m) out[m] += r->metrics[m];
  }
  for (double& v : out) v /= static_cast<double>(records.size());
  return out;
}

FoldOutput run_fold(const std::vector<Trip>& corpus, const Fold& fold, const EvalConfig& config, unsigned threads,
                    bool keep_steps) {
  const PipelineConfig& pc = config.pipeline;
  std::vector<const Trip*> train;
  std::vector<const Trip*> test;
  for (std::size_t i : fold.train) train.push_back(&corpus[i]);
  for (std::size_t i : fold.test) test.push_back(&corpus[i]);
  check_no_leakage(train, test);

  const FittedArtifacts art = fit_artifacts(train, pc, threads);

  FoldOutput out;
  FoldReport& rep = out.report;
  rep.seed = fold.seed;
  rep.fold = fold.fold;
  rep.n_train = train.size();
  rep.n_test = test.size();
  rep.tau_bad = art.tau_bad;
  rep.artifact_hash = fmt::format("{:016x}", art.hash());

  bool need_initial = false;
  bool need_reweighted = false;
  for (Variant v : config.variants) (spec_of(v).reweighted ? need_reweighted : need_initial) = true;

  for (const Trip* trip : test) {
    const FeatureMatrix x = art.context.build(*trip);
    std::vector<FlowProposal> initial;
    std::vector<FlowProposal> reweighted;
    try {
      if (need_initial) initial = art.initial_model.predict_trip(*trip, x);
      if (need_reweighted) reweighted = art.reweighted_model.predict_trip(*trip, x);
    } catch (const std::exception& e) {
      throw StageError(trip->trip_id, 0, std::string("perception: ") + e.what());
    }
    const auto anchors = trip_anchors(*trip, &art.anchor_map);
    std::vector<double> truth;
    truth.reserve(trip->size());
    for (const StopEvent& ev : trip->stops) truth.push_back(ev.mc_load);
    const double apc_rate = apc_inconsistency_rate(*trip, pc.capacity);
    const bool bad = apc_bad_label(apc_rate, art.tau_bad);
    if (bad) {
      ++rep.n_bad;
      rep.bad_trips.push_back(trip->trip_id);
    }

    for (Variant v : config.variants) {
      const VariantSpec spec = spec_of(v);
      const Trajectory t = run_spec(spec, *trip, spec.reweighted ? reweighted : initial, anchors, pc);

      TripRecord rec;
      rec.seed = fold.seed;
      rec.fold = fold.fold;
      rec.variant = v;
      rec.trip_id = trip->trip_id;
      rec.n_stops = static_cast<int>(trip->size());
      const TripMetrics m = trip_metrics(t.l_final, truth);
      rec.metrics[kRmse] = m.rmse;
      rec.metrics[kMae] = m.mae;
      rec.metrics[kEndAe] = m.end_ae;
      rec.metrics[kRmseRaw] =
          spec.mode == FusionMode::perception_only ? trip_metrics(t.shadow, truth).rmse : m.rmse;
      rec.metrics[kShadowInfeas] = shadow_infeasibility_rate(t.shadow, pc.capacity);
      rec.metrics[kEphysRate] = e_phys_rate(t.steps);
      rec.metrics[kShiftRate] = t.shift_gated ? 1.0 : 0.0;
      int anchored = 0;
      int gated = 0;
      for (const StepTrace& s : t.steps) {
        rec.cum_ephys += s.e_phys;
        if (s.anchor) {
          ++anchored;
          if (s.effective_alpha() >= config.gating_alpha) ++gated;
        }
      }
      rec.gating_freq = anchored > 0 ? static_cast<double>(gated) / anchored : 0.0;
      rec.shift_delta = t.shift_delta;
      rec.apc_rate = apc_rate;
      rec.apc_bad = bad;
      out.trips.push_back(rec);

      if (keep_steps) {
        for (std::size_t k = 0; k < t.size(); ++k) {
          out.steps.push_back({out.trips.size() - 1, static_cast<int>(k), t.steps[k], t.shadow[k], t.l_final[k],
                               trip->stops[k].mc_load});
        }
      }
    }
  }

  for (Variant v : config.variants) {
    std::vector<const TripRecord*> all;
    std::vector<const TripRecord*> bad;
    for (const TripRecord& r : out.trips) {
      if (r.variant != v) continue;
      all.push_back(&r);
      if (r.apc_bad) bad.push_back(&r);
    }
    rep.variants.push_back({v, mean_rows(all), mean_rows(bad)});
  }
  return out;
}

}  // namespace

RunReport run_ablation_matrix(const std::vector<Trip>& corpus, const EvalConfig& config, unsigned threads,
                              bool keep_steps) {
  config.validate();
  std::vector<std::string> ids;
  ids.reserve(corpus.size());
  for (const Trip& t : corpus) {
    check_trip_structure(t);
    ids.push_back(t.trip_id);
  }
  const SplitPlan plan = make_splits(ids, config.seeds, config.folds);

  std::vector<FoldOutput> outputs(plan.folds.size());
  const unsigned outer = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(plan.folds.size())));
  const unsigned inner = std::max(1u, threads / outer);
  parallel_for(plan.folds.size(), outer,
               [&](std::size_t i) { outputs[i] = run_fold(corpus, plan.folds[i], config, inner, keep_steps); });

  RunReport report;
  report.seeds = config.seeds;
  report.variants = config.variants;
  for (FoldOutput& o : outputs) {
    const std::size_t base = report.trips.size();
    for (StepRecord& s : o.steps) {
      s.trip_record += base;
      report.steps.push_back(s);
    }
    report.trips.insert(report.trips.end(), o.trips.begin(), o.trips.end());
    if (o.report.n_bad >= config.min_bad_trips) ++report.stress_folds;
    report.folds.push_back(std::move(o.report));
  }

  for (std::size_t vi = 0; vi < config.variants.size(); ++vi) {
    VariantSummary s;
    s.variant = config.variants[vi];
    std::vector<MetricRow> all;
    std::vector<MetricRow> stress;
    for (const FoldReport& f : report.folds) {
      all.push_back(f.variants[vi].all);
      if (f.n_bad >= config.min_bad_trips) stress.push_back(f.variants[vi].bad);
    }
    s.all = aggregate(all);
    s.stress = aggregate(stress);
    for (std::uint64_t seed : config.seeds) {
      std::vector<MetricRow> rows;
      for (const FoldReport& f : report.folds) {
        if (f.seed == seed) rows.push_back(f.variants[vi].all);
      }
      s.per_seed.push_back(aggregate(rows).mean);
    }
    report.summary.push_back(std::move(s));
  }
  return report;
}

}  // namespace loadest
