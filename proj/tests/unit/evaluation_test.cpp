#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "loadest/evaluation.hpp"
#include "loadest/synthetic.hpp"

using namespace loadest;

namespace {

std::vector<std::string> ids(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("T" + std::to_string(i));
  return out;
}

void check_partition(const SplitPlan& plan, std::size_t n) {
  for (std::uint64_t seed : plan.seeds) {
    std::vector<int> seen(n, 0);
    for (const Fold& f : plan.folds) {
      if (f.seed != seed) continue;
      std::set<std::size_t> train(f.train.begin(), f.train.end());
      for (std::size_t i : f.test) {
        CHECK(train.count(i) == 0);
        ++seen[i];
      }
      CHECK(f.train.size() + f.test.size() == n);
    }
    for (int s : seen) CHECK(s == 1);
  }
}

}  // namespace

TEST_CASE("splits of 10 trips are five folds of two") {
  const SplitPlan plan = make_splits(ids(10), {42});
  REQUIRE(plan.folds.size() == 5);
  for (const Fold& f : plan.folds) CHECK(f.test.size() == 2);
  check_partition(plan, 10);
}

TEST_CASE("remainder trips go to the first folds") {
  const SplitPlan plan = make_splits(ids(11), {7});
  std::vector<std::size_t> sizes;
  for (const Fold& f : plan.folds) sizes.push_back(f.test.size());
  CHECK(sizes == std::vector<std::size_t>{3, 2, 2, 2, 2});
  check_partition(plan, 11);
}

TEST_CASE("splits are deterministic per seed and differ across seeds") {
  const auto a = make_splits(ids(57), {42, 123, 999});
  const auto b = make_splits(ids(57), {42, 123, 999});
  REQUIRE(a.folds.size() == 15);
  for (std::size_t i = 0; i < a.folds.size(); ++i) {
    CHECK(a.folds[i].test == b.folds[i].test);
    CHECK(a.folds[i].train == b.folds[i].train);
  }
  CHECK(a.folds[0].test != a.folds[5].test);
  check_partition(a, 57);
}

TEST_CASE("split errors") {
  CHECK_THROWS_AS(make_splits(ids(4), {1}), InputError);
  CHECK_THROWS_AS(make_splits({"a", "b", "c", "a", "d", "e"}, {1}), InputError);
  CHECK_THROWS_AS(make_splits(ids(10), {}), InputError);
}

TEST_CASE("trip metrics examples") {
  TripMetrics m = trip_metrics(std::vector<double>{1, 2}, std::vector<double>{1, 2});
  CHECK(m.rmse == 0);
  CHECK(m.mae == 0);
  CHECK(m.end_ae == 0);
  m = trip_metrics(std::vector<double>{3}, std::vector<double>{0});
  CHECK(m.rmse == 3);
  CHECK(m.mae == 3);
  CHECK(m.end_ae == 3);
  m = trip_metrics(std::vector<double>{0, 6}, std::vector<double>{0, 0});
  CHECK(m.rmse == doctest::Approx(std::sqrt(18.0)));
  CHECK(m.mae == 3);
  CHECK(m.end_ae == 6);
  CHECK_THROWS_AS(trip_metrics(std::vector<double>{1}, std::vector<double>{1, 2}), InputError);
}

TEST_CASE("apc inconsistency rate") {
  // Ten stops, three of which alight more than the APC load holds.
  Trip t = testutil::make_trip("T", {5, 0, 0, 3, 0, 0, 2, 0, 0, 0}, {0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  t.stops[2].apc_alight_raw = 9;   // load 5
  t.stops[5].apc_alight_raw = 4;   // load 3
  t.stops[8].apc_alight_raw = 10;  // load 2
  CHECK(apc_inconsistency_rate(t, Capacity(80)) == doctest::Approx(0.3));

  const Trip clean = testutil::make_trip("U", {5, 2, 0, 3}, {0, 1, 4, 2});
  CHECK(apc_inconsistency_rate(clean, Capacity(80)) == 0.0);
  CHECK_FALSE(apc_bad_label(0.0, 0.0));
}

TEST_CASE("nearest-rank quantile") {
  // ceil(0.75 * 4) = 3rd smallest.
  CHECK(nearest_rank_quantile({0, 0.1, 0.2, 0.4}, 0.75) == 0.2);
  CHECK(nearest_rank_quantile({0.4, 0.2, 0.1, 0}, 1.0) == 0.4);
  CHECK(nearest_rank_quantile({0.4, 0.2, 0.1, 0}, 0.0) == 0.0);
  CHECK(nearest_rank_quantile({0, 0, 0}, 0.75) == 0.0);
  CHECK_THROWS_AS(nearest_rank_quantile({}, 0.5), InputError);
  CHECK_THROWS_AS(nearest_rank_quantile({1}, 1.5), InputError);
}

TEST_CASE("tau_bad from training flags a held-out trip above it") {
  std::vector<Trip> trips;
  for (int i = 0; i < 4; ++i) trips.push_back(testutil::make_trip("T" + std::to_string(i), {5, 0, 0, 0}, {0, 0, 0, 0}));
  // Rates 0, 0.25, 0.5, 0.75.
  for (int i = 1; i < 4; ++i) {
    for (int k = 1; k <= i; ++k) trips[i].stops[k].apc_alight_raw = 50;
  }
  std::vector<const Trip*> train;
  for (const Trip& t : trips) train.push_back(&t);
  const double tau = fit_tau_bad(train, 0.75, Capacity(80));
  CHECK(tau == 0.5);
  CHECK(fit_tau_bad(train, 1.0, Capacity(80)) == 0.75);
  CHECK(apc_bad_label(0.75, tau));
  CHECK_FALSE(apc_bad_label(0.5, tau));

  std::vector<const Trip*> clean = {&trips[0], &trips[0]};
  const double zero = fit_tau_bad(clean, 0.75, Capacity(80));
  CHECK(zero == 0.0);
  CHECK(apc_bad_label(0.01, zero));
}

TEST_CASE("aggregate uses ddof 1") {
  MetricRow a{};
  MetricRow b{};
  MetricRow c{};
  a[kRmse] = 1;
  b[kRmse] = 2;
  c[kRmse] = 6;
  const Aggregate g = aggregate({a, b, c});
  CHECK(g.n == 3);
  CHECK(g.mean[kRmse] == 3);
  CHECK(g.std[kRmse] == doctest::Approx(std::sqrt(7.0)));
  CHECK(aggregate({a}).std[kRmse] == 0.0);
  CHECK(aggregate({}).n == 0);
}

TEST_CASE("leakage guard catches shared trip ids") {
  const Trip a = testutil::make_trip("A", {1}, {0});
  const Trip b = testutil::make_trip("B", {1}, {0});
  CHECK_NOTHROW(check_no_leakage({&a}, {&b}));
  CHECK_THROWS_AS(check_no_leakage({&a, &b}, {&b}), LeakageError);
}

TEST_CASE("variant keys round trip") {
  for (Variant v : kAllVariants) CHECK(parse_variant(variant_key(v)) == v);
  CHECK_THROWS_AS(parse_variant("bogus"), InputError);
}

TEST_CASE("stop keys are stable and distinct") {
  CHECK(stop_key("T1", 0) == stop_key("T1", 0));
  CHECK(stop_key("T1", 0) != stop_key("T1", 1));
  CHECK(stop_key("T1", 10) != stop_key("T11", 0));
}

namespace {

PipelineConfig small_pipeline() {
  PipelineConfig pc;
  pc.forest.n_trees = 12;
  pc.forest.max_depth = 6;
  return pc;
}

}  // namespace

TEST_CASE("closed-loop refit collapses to the initial fit with unit weights") {
  SynthConfig sc;
  sc.n_trips = 20;
  const SynthCorpus corpus = generate_corpus(sc);
  std::vector<const Trip*> train;
  for (const Trip& t : corpus.trips) train.push_back(&t);

  PipelineConfig pc = small_pipeline();
  pc.reweight.lambda = 0.0;
  const FittedArtifacts art = fit_artifacts(train, pc);
  const TrainingData data = build_training_data(train, art.context);
  const ClosedLoopResult r = closed_loop_refit(train, data, &art.anchor_map, pc);
  CHECK(r.refit == r.initial);
  for (double w : r.weights) CHECK(w == 1.0);
}

TEST_CASE("closed-loop refit with a positive lambda upweights clipped stops") {
  SynthConfig sc;
  sc.n_trips = 20;
  const SynthCorpus corpus = generate_corpus(sc);
  std::vector<const Trip*> train;
  for (const Trip& t : corpus.trips) train.push_back(&t);

  const PipelineConfig pc = small_pipeline();
  const FittedArtifacts art = fit_artifacts(train, pc);
  const TrainingData data = build_training_data(train, art.context);
  const ClosedLoopResult r = closed_loop_refit(train, data, &art.anchor_map, pc);
  REQUIRE(r.weights.size() == data.board.size());
  CHECK(*std::max_element(r.weights.begin(), r.weights.end()) > 1.0);
  for (double w : r.weights) {
    CHECK(w >= 1.0);
    CHECK(w <= pc.reweight.omega_max);
  }
  CHECK_FALSE(r.refit == r.initial);
}

TEST_CASE("artifact hash ignores trips outside the training set") {
  SynthConfig sc;
  sc.n_trips = 16;
  SynthCorpus corpus = generate_corpus(sc);
  std::vector<const Trip*> train;
  for (int i = 0; i < 12; ++i) train.push_back(&corpus.trips[i]);
  const PipelineConfig pc = small_pipeline();
  const std::uint64_t h = fit_artifacts(train, pc).hash();
  for (int i = 12; i < 16; ++i) {
    for (StopEvent& ev : corpus.trips[i].stops) {
      ev.mc_load += 7;
      ev.apc_board_raw = 99;
    }
  }
  CHECK(fit_artifacts(train, pc).hash() == h);
  corpus.trips[0].stops[0].apc_board_raw += 1;
  CHECK(fit_artifacts(train, pc).hash() != h);
}

TEST_CASE("noiseless corpus with perfect anchors is recovered by every fused variant") {
  SynthConfig sc = SynthConfig::noiseless();
  sc.n_trips = 30;
  // One person per device, so rounding cannot perturb the anchors.
  sc.device_ratio_per_hour.fill(1.0);
  const SynthCorpus corpus = generate_corpus(sc);
  EvalConfig ec;
  ec.pipeline.forest.n_trees = 30;
  ec.seeds = {42};
  ec.variants = {Variant::fixed_fusion, Variant::no_reweight, Variant::proposed};
  const RunReport rep = run_ablation_matrix(corpus.trips, ec);
  for (const VariantSummary& s : rep.summary) CHECK(s.all.mean[kRmse] < 0.5);
}

TEST_CASE("ablation report bookkeeping") {
  SynthConfig sc;
  sc.n_trips = 25;
  const SynthCorpus corpus = generate_corpus(sc);
  EvalConfig ec;
  ec.pipeline.forest.n_trees = 10;
  ec.seeds = {42, 123};
  const RunReport rep = run_ablation_matrix(corpus.trips, ec, 1, true);
  CHECK(rep.folds.size() == 10);
  CHECK(rep.summary.size() == 6);
  CHECK(rep.trips.size() == 2 * 25 * 6);

  std::size_t stops = 0;
  for (const Trip& t : corpus.trips) stops += t.size();
  CHECK(rep.steps.size() == 2 * stops * 6);

  for (const VariantSummary& s : rep.summary) {
    if (s.variant != Variant::shift_probe) CHECK(s.all.mean[kShiftRate] == 0.0);
    CHECK(s.per_seed.size() == 2);
  }
  // Fold means are means of the stored per-trip rows.
  for (const FoldReport& f : rep.folds) {
    for (const FoldVariantReport& v : f.variants) {
      double sum = 0.0;
      int n = 0;
      for (const TripRecord& r : rep.trips) {
        if (r.seed == f.seed && r.fold == f.fold && r.variant == v.variant) {
          sum += r.metrics[kRmse];
          ++n;
        }
      }
      CHECK(n == static_cast<int>(f.n_test));
      CHECK(std::abs(sum / n - v.all[kRmse]) <= 1e-12);
    }
  }
}
