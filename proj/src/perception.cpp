#include "loadest/perception.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include <fmt/format.h>
#include <json.hpp>

#include "loadest/parallel.hpp"
#include "loadest/random.hpp"

namespace loadest {
namespace {

// One uniform per (tree, sample) without constructing a generator.
double keyed_uniform(std::uint64_t tree_seed, std::uint64_t key) {
  return static_cast<double>(splitmix64(tree_seed ^ splitmix64(key)) >> 11) * 0x1.0p-53;
}

int poisson_from_uniform(double u, double lambda) {
  if (!(lambda > 0.0)) return 0;
  double p = std::exp(-lambda);
  double cdf = p;
  int k = 0;
  while (u >= cdf && k < 1000) {
    ++k;
    p *= lambda / k;
    cdf += p;
  }
  return k;
}

// Per-feature split candidates: thresholds sit midway between adjacent
// distinct values; bin(v) is the number of thresholds below v.
struct FeatureBins {
  std::vector<double> thresholds;
  std::vector<std::uint8_t> bin;  // per canonical row
};

FeatureBins make_bins(const FeatureMatrix& x, const std::vector<std::size_t>& order, std::size_t feature,
                      int max_bins) {
  const std::size_t n = order.size();
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = x.at(order[i], feature);
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> unique;
  std::vector<std::size_t> first_pos;
  for (std::size_t i = 0; i < n; ++i) {
    if (unique.empty() || sorted[i] != unique.back()) {
      unique.push_back(sorted[i]);
      first_pos.push_back(i);
    }
  }
  FeatureBins fb;
  if (unique.size() <= static_cast<std::size_t>(max_bins)) {
    for (std::size_t j = 0; j + 1 < unique.size(); ++j) fb.thresholds.push_back(0.5 * (unique[j] + unique[j + 1]));
  } else {
    // Quantile gaps: cut after the unique value holding the (q/B)-th sample.
    std::size_t last_gap = unique.size();
    for (int q = 1; q < max_bins; ++q) {
      const std::size_t pos = static_cast<std::size_t>(q) * n / static_cast<std::size_t>(max_bins);
      const std::size_t u = static_cast<std::size_t>(
          std::upper_bound(first_pos.begin(), first_pos.end(), pos) - first_pos.begin() - 1);
      if (u + 1 >= unique.size() || u == last_gap) continue;
      fb.thresholds.push_back(0.5 * (unique[u] + unique[u + 1]));
      last_gap = u;
    }
  }
  fb.bin.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    fb.bin[i] = static_cast<std::uint8_t>(
        std::lower_bound(fb.thresholds.begin(), fb.thresholds.end(), values[i]) - fb.thresholds.begin());
  }
  return fb;
}

struct TreeBuilder {
  const std::vector<FeatureBins>& bins;
  const std::vector<double>& y;
  const std::vector<double>& sample_weight;  // count * w
  const std::vector<int>& count;
  const ForestParams& params;
  Rng rng;
  RegressionForest::Tree tree;
  std::vector<std::size_t> feature_pool;

  struct Hist {
    double w = 0.0;
    double s = 0.0;
    long n = 0;
  };
  std::vector<Hist> hist;

  int build(std::vector<std::size_t>& rows, std::size_t begin, std::size_t end, int depth) {
    double w = 0.0;
    double s = 0.0;
    double q = 0.0;
    long n = 0;
    for (std::size_t r = begin; r < end; ++r) {
      const std::size_t i = rows[r];
      w += sample_weight[i];
      s += sample_weight[i] * y[i];
      q += sample_weight[i] * y[i] * y[i];
      n += count[i];
    }
    const int id = static_cast<int>(tree.size());
    tree.push_back({});
    tree[id].value = w > 0.0 ? s / w : 0.0;
    if (depth >= params.max_depth || n < 2L * params.min_samples_leaf || !(w > 0.0)) return id;

    const std::size_t p = feature_pool.size();
    const std::size_t mtry = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(params.max_features * static_cast<double>(p))), 1, p);
    for (std::size_t j = 0; j < mtry; ++j) {
      const auto pick = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(j), static_cast<std::int64_t>(p) - 1));
      std::swap(feature_pool[j], feature_pool[pick]);
    }
    std::vector<std::size_t> candidates(feature_pool.begin(), feature_pool.begin() + static_cast<long>(mtry));
    std::sort(candidates.begin(), candidates.end());

    const double parent = s * s / w;
    const double min_gain = 1e-10 * std::max(1.0, std::abs(q));
    double best_gain = min_gain;
    int best_feature = -1;
    int best_bin = -1;
    for (std::size_t f : candidates) {
      const FeatureBins& fb = bins[f];
      const std::size_t nbins = fb.thresholds.size() + 1;
      if (nbins < 2) continue;
      hist.assign(nbins, {});
      for (std::size_t r = begin; r < end; ++r) {
        const std::size_t i = rows[r];
        Hist& h = hist[fb.bin[i]];
        h.w += sample_weight[i];
        h.s += sample_weight[i] * y[i];
        h.n += count[i];
      }
      Hist left;
      for (std::size_t b = 0; b + 1 < nbins; ++b) {
        left.w += hist[b].w;
        left.s += hist[b].s;
        left.n += hist[b].n;
        const double rw = w - left.w;
        const long rn = n - left.n;
        if (left.n < params.min_samples_leaf) continue;
        if (rn < params.min_samples_leaf) break;
        if (!(left.w > 0.0) || !(rw > 0.0)) continue;
        const double rs = s - left.s;
        const double gain = left.s * left.s / left.w + rs * rs / rw - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_bin = static_cast<int>(b);
        }
      }
    }
    if (best_feature < 0) return id;

    const FeatureBins& fb = bins[static_cast<std::size_t>(best_feature)];
    const auto mid = std::stable_partition(rows.begin() + static_cast<long>(begin), rows.begin() + static_cast<long>(end),
                                           [&](std::size_t i) { return fb.bin[i] <= best_bin; });
    const auto split = static_cast<std::size_t>(mid - rows.begin());
    tree[id].feature = best_feature;
    tree[id].threshold = fb.thresholds[static_cast<std::size_t>(best_bin)];
    const int l = build(rows, begin, split, depth + 1);
    const int r = build(rows, split, end, depth + 1);
    tree[id].left = l;
    tree[id].right = r;
    return id;
  }
};

double eval_tree(const RegressionForest::Tree& tree, std::span<const double> x) {
  int node = 0;
  while (tree[node].feature >= 0) {
    node = x[static_cast<std::size_t>(tree[node].feature)] <= tree[node].threshold ? tree[node].left : tree[node].right;
  }
  return tree[node].value;
}

void check_targets(const FeatureMatrix& x, std::span<const double> y, std::span<const double> weights,
                   std::span<const std::uint64_t> keys) {
  if (x.rows() == 0) throw InputError("perception fit: empty training set");
  if (y.size() != x.rows() || weights.size() != x.rows()) {
    throw InputError(fmt::format("perception fit: {} rows, {} targets, {} weights", x.rows(), y.size(), weights.size()));
  }
  if (!keys.empty() && keys.size() != x.rows()) throw InputError("perception fit: key count differs from rows");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("perception fit: weights must be finite and non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw InputError("perception fit: all sample weights are zero");
  for (double v : y) {
    if (!std::isfinite(v)) throw InputError("perception fit: non-finite target");
  }
}

}  // namespace

std::vector<FlowProposal> FlowPredictor::predict_trip(const Trip& trip, const FeatureMatrix& contexts) const {
  if (contexts.rows() != trip.size()) throw InputError("predict_trip: context rows differ from trip length");
  std::vector<FlowProposal> out;
  out.reserve(contexts.rows());
  for (std::size_t k = 0; k < contexts.rows(); ++k) out.push_back(predict(contexts.row(k)));
  return out;
}

FlowProposal ReplayPredictor::predict(std::span<const double>) const {
  throw ContractViolation("ReplayPredictor needs the trip; call predict_trip");
}

std::vector<FlowProposal> ReplayPredictor::predict_trip(const Trip& trip, const FeatureMatrix&) const {
  std::vector<FlowProposal> out;
  out.reserve(trip.size());
  for (const StopEvent& ev : trip.stops) out.push_back({static_cast<double>(ev.mc_board), static_cast<double>(ev.mc_alight)});
  return out;
}

void ForestParams::validate() const {
  if (n_trees < 1) throw InputError("forest: n_trees must be positive");
  if (max_depth < 0) throw InputError("forest: max_depth must be non-negative");
  if (min_samples_leaf < 1) throw InputError("forest: min_samples_leaf must be positive");
  if (!(max_features > 0.0 && max_features <= 1.0)) throw InputError("forest: max_features must lie in (0,1]");
  if (max_bins < 2 || max_bins > 256) throw InputError("forest: max_bins must lie in [2,256]");
}

RegressionForest RegressionForest::fit(const FeatureMatrix& x, std::span<const double> y, std::span<const double> weights,
                                       std::span<const std::uint64_t> keys, const ForestParams& params, unsigned threads,
                                       std::vector<double>* oob) {
  params.validate();
  check_targets(x, y, weights, keys);
  const std::size_t n = x.rows();

  // Canonical row order by key.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::uint64_t> key(n);
  for (std::size_t i = 0; i < n; ++i) key[i] = keys.empty() ? i : keys[i];
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });

  std::vector<double> cy(n);
  std::vector<double> cw(n);
  std::vector<std::uint64_t> ck(n);
  double total_w = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cy[i] = y[order[i]];
    cw[i] = weights[order[i]];
    ck[i] = key[order[i]];
    total_w += cw[i];
  }

  std::vector<FeatureBins> bins(x.cols());
  for (std::size_t f = 0; f < x.cols(); ++f) bins[f] = make_bins(x, order, f, params.max_bins);

  RegressionForest forest;
  forest.input_dim_ = x.cols();
  forest.trees_.resize(static_cast<std::size_t>(params.n_trees));
  std::vector<std::vector<int>> in_bag(oob ? forest.trees_.size() : 0);

  parallel_for(forest.trees_.size(), threads, [&](std::size_t t) {
    const std::uint64_t tree_seed = derive_seed(params.seed, static_cast<std::uint64_t>(t));
    std::vector<int> count(n);
    std::vector<double> sw(n);
    std::vector<std::size_t> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double lambda = static_cast<double>(n) * cw[i] / total_w;
      count[i] = poisson_from_uniform(keyed_uniform(tree_seed, ck[i]), lambda);
      sw[i] = count[i] * cw[i];
      if (count[i] > 0) rows.push_back(i);
    }
    TreeBuilder builder{bins, cy, sw, count, params, Rng(derive_seed(tree_seed, "features")), {}, {}, {}};
    builder.feature_pool.resize(x.cols());
    std::iota(builder.feature_pool.begin(), builder.feature_pool.end(), std::size_t{0});
    if (rows.empty()) {
      // Degenerate bootstrap; fall back to the weighted mean of all rows.
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += cw[i] * cy[i];
      builder.tree.push_back({-1, 0.0, -1, -1, s / total_w});
    } else {
      builder.build(rows, 0, rows.size(), 0);
    }
    forest.trees_[t] = std::move(builder.tree);
    if (oob) in_bag[t] = std::move(count);
  });

  if (oob) {
    oob->assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = x.row(order[i]);
      double sum = 0.0;
      std::size_t used = 0;
      for (std::size_t t = 0; t < forest.trees_.size(); ++t) {
        if (in_bag[t][i] == 0) {
          sum += eval_tree(forest.trees_[t], row);
          ++used;
        }
      }
      (*oob)[order[i]] = used > 0 ? sum / static_cast<double>(used) : forest.predict(row);
    }
  }
  return forest;
}

double RegressionForest::predict(std::span<const double> x) const {
  if (x.size() != input_dim_) {
    throw InputError(fmt::format("predict: context has {} features, model expects {}", x.size(), input_dim_));
  }
  if (trees_.empty()) throw ContractViolation("predict: forest is not fitted");
  double sum = 0.0;
  for (const Tree& tree : trees_) sum += eval_tree(tree, x);
  return sum / static_cast<double>(trees_.size());
}

RegressionForest RegressionForest::from_trees(std::size_t input_dim, std::vector<Tree> trees) {
  for (const Tree& tree : trees) {
    if (tree.empty()) throw InputError("forest: empty tree");
    for (const Node& node : tree) {
      if (node.feature >= 0) {
        if (static_cast<std::size_t>(node.feature) >= input_dim) throw InputError("forest: split feature out of range");
        const auto size = static_cast<int>(tree.size());
        if (node.left <= 0 || node.right <= 0 || node.left >= size || node.right >= size) {
          throw InputError("forest: child index out of range");
        }
      }
    }
  }
  RegressionForest f;
  f.input_dim_ = input_dim;
  f.trees_ = std::move(trees);
  return f;
}

void RegressionForest::add_to(Digest& d) const {
  d.add(std::string_view("forest")).add_u64(input_dim_).add_u64(trees_.size());
  for (const Tree& tree : trees_) {
    d.add_u64(tree.size());
    for (const Node& node : tree) d.add(node.feature).add(node.threshold).add(node.left).add(node.right).add(node.value);
  }
}

bool RegressionForest::operator==(const RegressionForest& other) const {
  if (input_dim_ != other.input_dim_ || trees_.size() != other.trees_.size()) return false;
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    const Tree& a = trees_[t];
    const Tree& b = other.trees_[t];
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].feature != b[i].feature || a[i].threshold != b[i].threshold || a[i].left != b[i].left ||
          a[i].right != b[i].right || a[i].value != b[i].value) {
        return false;
      }
    }
  }
  return true;
}

BaggedTreeRegressor::BaggedTreeRegressor(RegressionForest board, RegressionForest alight)
    : board_(std::move(board)), alight_(std::move(alight)) {
  if (board_.input_dim() != alight_.input_dim()) throw InputError("flow model: forests disagree on input dimension");
}

BaggedTreeRegressor BaggedTreeRegressor::fit(const FeatureMatrix& x, std::span<const double> board_targets,
                                             std::span<const double> alight_targets, std::span<const double> weights,
                                             std::span<const std::uint64_t> keys, const ForestParams& params,
                                             unsigned threads, OobFlows* oob) {
  ForestParams board_params = params;
  board_params.seed = derive_seed(params.seed, "board");
  ForestParams alight_params = params;
  alight_params.seed = derive_seed(params.seed, "alight");
  auto board = RegressionForest::fit(x, board_targets, weights, keys, board_params, threads, oob ? &oob->board : nullptr);
  auto alight =
      RegressionForest::fit(x, alight_targets, weights, keys, alight_params, threads, oob ? &oob->alight : nullptr);
  if (oob) {
    for (double& v : oob->board) v = std::max(0.0, v);
    for (double& v : oob->alight) v = std::max(0.0, v);
  }
  return BaggedTreeRegressor(std::move(board), std::move(alight));
}

FlowProposal BaggedTreeRegressor::predict(std::span<const double> context) const {
  return {std::max(0.0, board_.predict(context)), std::max(0.0, alight_.predict(context))};
}

void BaggedTreeRegressor::add_to(Digest& d) const {
  d.add(std::string_view("flow_model"));
  board_.add_to(d);
  alight_.add_to(d);
}

namespace {

nlohmann::json forest_to_json(const RegressionForest& forest) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : forest.trees()) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : tree) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
    trees.push_back(std::move(nodes));
  }
  return {{"input_dim", forest.input_dim()}, {"trees", std::move(trees)}};
}

RegressionForest forest_from_json(const nlohmann::json& j) {
  std::vector<RegressionForest::Tree> trees;
  for (const auto& jt : j.at("trees")) {
    RegressionForest::Tree tree;
    for (const auto& jn : jt) {
      tree.push_back({jn.at(0).get<int>(), jn.at(1).get<double>(), jn.at(2).get<int>(), jn.at(3).get<int>(),
                      jn.at(4).get<double>()});
    }
    trees.push_back(std::move(tree));
  }
  return RegressionForest::from_trees(j.at("input_dim").get<std::size_t>(), std::move(trees));
}

}  // namespace

void BaggedTreeRegressor::save(std::ostream& out) const {
  const nlohmann::json j = {{"format", "loadest-flow-model"},
                            {"version", kModelFormatVersion},
                            {"board", forest_to_json(board_)},
                            {"alight", forest_to_json(alight_)}};
  out << j.dump() << '\n';
}

BaggedTreeRegressor BaggedTreeRegressor::load(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
    if (j.at("format").get<std::string>() != "loadest-flow-model") throw InputError("model file: wrong format tag");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) throw InputError(fmt::format("model file: unsupported version {}", version));
    return BaggedTreeRegressor(forest_from_json(j.at("board")), forest_from_json(j.at("alight")));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(fmt::format("model file: {}", e.what()));
  }
}

}  // namespace loadest
