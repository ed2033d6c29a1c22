#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "loadest/context.hpp"
#include "loadest/evaluation.hpp"
#include "loadest/perception.hpp"
#include "loadest/random.hpp"
#include "loadest/synthetic.hpp"

using namespace loadest;

namespace {

struct Toy {
  FeatureMatrix x{3};
  std::vector<double> board;
  std::vector<double> alight;
  std::vector<std::uint64_t> keys;
};

Toy toy(int n, std::uint64_t seed) {
  Toy t;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    const std::vector<double> row = {rng.uniform(0, 10), static_cast<double>(rng.uniform_int(0, 3)), rng.uniform()};
    t.x.append(row);
    t.board.push_back(2.0 * row[0] + row[1]);
    t.alight.push_back(row[1] > 1 ? 5.0 : 1.0);
    t.keys.push_back(derive_seed(seed, static_cast<std::uint64_t>(i)));
  }
  return t;
}

ForestParams small() {
  ForestParams p;
  p.n_trees = 25;
  p.max_depth = 8;
  return p;
}

}  // namespace

TEST_CASE("constant targets are recovered everywhere") {
  const Toy t = toy(200, 1);
  const std::vector<double> three(200, 3.0);
  const std::vector<double> w(200, 1.0);
  const auto m = BaggedTreeRegressor::fit(t.x, three, three, w, t.keys, small());
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> q = {rng.uniform(-50, 50), rng.uniform(-5, 5), rng.uniform()};
    const FlowProposal p = m.predict(q);
    CHECK(p.board == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(p.alight == doctest::Approx(3.0).epsilon(1e-12));
  }
}

TEST_CASE("uniformly scaled weights give the identical model") {
  const Toy t = toy(300, 2);
  const std::vector<double> one(300, 1.0);
  const std::vector<double> two(300, 2.0);
  const auto a = BaggedTreeRegressor::fit(t.x, t.board, t.alight, one, t.keys, small());
  const auto b = BaggedTreeRegressor::fit(t.x, t.board, t.alight, two, t.keys, small());
  CHECK(a == b);
}

TEST_CASE("row order does not change the model when keys travel with rows") {
  const Toy t = toy(150, 3);
  Toy r;
  for (int i = 149; i >= 0; --i) {
    r.x.append(t.x.row(i));
    r.board.push_back(t.board[i]);
    r.alight.push_back(t.alight[i]);
    r.keys.push_back(t.keys[i]);
  }
  const std::vector<double> w(150, 1.0);
  CHECK(BaggedTreeRegressor::fit(t.x, t.board, t.alight, w, t.keys, small()) ==
        BaggedTreeRegressor::fit(r.x, r.board, r.alight, w, r.keys, small()));
}

TEST_CASE("fitting is independent of the thread count") {
  const Toy t = toy(200, 5);
  const std::vector<double> w(200, 1.0);
  CHECK(BaggedTreeRegressor::fit(t.x, t.board, t.alight, w, t.keys, small(), 1) ==
        BaggedTreeRegressor::fit(t.x, t.board, t.alight, w, t.keys, small(), 3));
}

TEST_CASE("predictions are deterministic and non-negative") {
  const Toy t = toy(200, 6);
  const std::vector<double> w(200, 1.0);
  const auto m = BaggedTreeRegressor::fit(t.x, t.board, t.alight, w, t.keys, small());
  const std::vector<double> q = {4.2, 1.0, 0.3};
  const FlowProposal a = m.predict(q);
  const FlowProposal b = m.predict(q);
  CHECK(a.board == b.board);
  CHECK(a.alight == b.alight);
  CHECK(a.board >= 0);
  // Roughly learns 2 x0 + x1.
  CHECK(a.board == doctest::Approx(9.4).epsilon(0.15));
  CHECK_THROWS_AS(m.predict(std::vector<double>{1.0}), InputError);
}

TEST_CASE("negative forest output is clamped to zero") {
  RegressionForest::Tree leaf = {RegressionForest::Node{-1, 0.0, -1, -1, -0.2}};
  const RegressionForest f = RegressionForest::from_trees(2, {leaf});
  const BaggedTreeRegressor m(f, f);
  const std::vector<double> q = {0, 0};
  CHECK(f.predict(q) == -0.2);
  CHECK(m.predict(q).board == 0.0);
  CHECK(m.predict(q).alight == 0.0);
}

TEST_CASE("fit input validation") {
  const Toy t = toy(20, 7);
  std::vector<double> w(20, 1.0);
  CHECK_THROWS_AS(BaggedTreeRegressor::fit(FeatureMatrix(3), {}, {}, {}, {}, small()), InputError);
  CHECK_THROWS_AS(BaggedTreeRegressor::fit(t.x, t.board, t.alight, std::vector<double>(19, 1.0), t.keys, small()),
                  InputError);
  w[3] = -1;
  CHECK_THROWS_AS(BaggedTreeRegressor::fit(t.x, t.board, t.alight, w, t.keys, small()), InputError);
  CHECK_THROWS_AS(BaggedTreeRegressor::fit(t.x, t.board, t.alight, std::vector<double>(20, 0.0), t.keys, small()),
                  InputError);
  ForestParams p = small();
  p.max_features = 0;
  CHECK_THROWS_AS(p.validate(), InputError);
  p = small();
  p.n_trees = 0;
  CHECK_THROWS_AS(p.validate(), InputError);
}

TEST_CASE("model save and load round trip") {
  const Toy t = toy(120, 8);
  const std::vector<double> w(120, 1.0);
  const auto m = BaggedTreeRegressor::fit(t.x, t.board, t.alight, w, t.keys, small());
  std::stringstream ss;
  m.save(ss);
  const auto back = BaggedTreeRegressor::load(ss);
  CHECK(back == m);
  const std::vector<double> q = {7.7, 2, 0.1};
  CHECK(back.predict(q).board == m.predict(q).board);

  std::stringstream wrong("{\"format\":\"loadest-flow-model\",\"version\":99}");
  CHECK_THROWS_AS(BaggedTreeRegressor::load(wrong), InputError);
  std::stringstream junk("not json");
  CHECK_THROWS_AS(BaggedTreeRegressor::load(junk), InputError);
}

TEST_CASE("out-of-bag predictions cover every row") {
  const Toy t = toy(200, 9);
  const std::vector<double> w(200, 1.0);
  BaggedTreeRegressor::OobFlows oob;
  BaggedTreeRegressor::fit(t.x, t.board, t.alight, w, t.keys, small(), 1, &oob);
  REQUIRE(oob.board.size() == 200);
  REQUIRE(oob.alight.size() == 200);
  double err = 0.0;
  for (int i = 0; i < 200; ++i) {
    CHECK(oob.board[i] >= 0.0);
    err += std::abs(oob.board[i] - t.board[i]);
  }
  CHECK(err / 200 < 2.0);
}

TEST_CASE("held-out flow error is below the raw APC error") {
  const SynthCorpus corpus = generate_corpus(SynthConfig{});
  std::vector<const Trip*> train;
  std::vector<const Trip*> test;
  for (std::size_t i = 0; i < corpus.trips.size(); ++i) (i % 4 == 0 ? test : train).push_back(&corpus.trips[i]);

  PipelineConfig pc;
  pc.forest.n_trees = 60;
  const FittedArtifacts art = fit_artifacts(train, pc);
  double model_err = 0.0;
  double apc_err = 0.0;
  std::size_t n = 0;
  for (const Trip* trip : test) {
    const auto pred = art.initial_model.predict_trip(*trip, art.context.build(*trip));
    for (std::size_t k = 0; k < trip->size(); ++k) {
      const StopEvent& ev = trip->stops[k];
      model_err += std::abs(pred[k].board - ev.mc_board) + std::abs(pred[k].alight - ev.mc_alight);
      apc_err += std::abs(ev.apc_board_raw - ev.mc_board) + std::abs(ev.apc_alight_raw - ev.mc_alight);
      ++n;
    }
  }
  MESSAGE("model MAE " << model_err / n << ", raw APC MAE " << apc_err / n);
  CHECK(model_err < apc_err);
}
