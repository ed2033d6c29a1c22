#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "loadest/core.hpp"
#include "loadest/digest.hpp"
#include "loadest/feature_matrix.hpp"

namespace loadest {

struct FlowProposal {
  double board = 0.0;
  double alight = 0.0;
};

/// Maps a context vector to non-negative (boarding, alighting) proposals.
/// Predictions depend on the context only, never on the recursive state.
class FlowPredictor {
 public:
  virtual ~FlowPredictor() = default;

  virtual FlowProposal predict(std::span<const double> context) const = 0;

  /// Batch prediction for a whole trip; defaults to row-by-row predict().
  virtual std::vector<FlowProposal> predict_trip(const Trip& trip, const FeatureMatrix& contexts) const;
};

/// Test double that replays the manual-count flows of the trip.
class ReplayPredictor final : public FlowPredictor {
 public:
  FlowProposal predict(std::span<const double> context) const override;
  std::vector<FlowProposal> predict_trip(const Trip& trip, const FeatureMatrix& contexts) const override;
};

struct ForestParams {
  int n_trees = 200;
  int max_depth = 12;
  int min_samples_leaf = 2;
  // Fraction of features tried at each split.
  double max_features = 1.0;
  int max_bins = 64;
  std::uint64_t seed = 17;

  void validate() const;
};

/// Bagged regression trees with histogram splits.
///
/// Each tree draws a Poisson(n * w_i / sum w) bootstrap count per sample,
/// seeded by (tree, sample key), so the in-bag set does not depend on row
/// order. Rows are sorted by key before fitting. Split search and leaf values
/// use count_i * w_i as the sample weight.
class RegressionForest {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  using Tree = std::vector<Node>;

  /// keys may be empty (then the row position is the key). When oob is
  /// non-null it receives out-of-bag predictions in input row order; rows
  /// that are in-bag for every tree get the full-forest prediction.
  static RegressionForest fit(const FeatureMatrix& x, std::span<const double> y, std::span<const double> weights,
                              std::span<const std::uint64_t> keys, const ForestParams& params, unsigned threads = 1,
                              std::vector<double>* oob = nullptr);

  /// Mean of tree outputs, unclamped.
  double predict(std::span<const double> x) const;

  std::size_t input_dim() const noexcept { return input_dim_; }
  const std::vector<Tree>& trees() const noexcept { return trees_; }

  static RegressionForest from_trees(std::size_t input_dim, std::vector<Tree> trees);

  void add_to(Digest& d) const;
  bool operator==(const RegressionForest&) const;

 private:
  friend class ForestCodec;
  std::size_t input_dim_ = 0;
  std::vector<Tree> trees_;
};

/// Default flow predictor: two independent forests (boarding, alighting).
class BaggedTreeRegressor final : public FlowPredictor {
 public:
  BaggedTreeRegressor() = default;
  BaggedTreeRegressor(RegressionForest board, RegressionForest alight);

  struct OobFlows {
    std::vector<double> board;
    std::vector<double> alight;
  };

  /// Errors: empty training set, mismatched lengths, negative or all-zero weights.
  static BaggedTreeRegressor fit(const FeatureMatrix& x, std::span<const double> board_targets,
                                 std::span<const double> alight_targets, std::span<const double> weights,
                                 std::span<const std::uint64_t> keys, const ForestParams& params, unsigned threads = 1,
                                 OobFlows* oob = nullptr);

  /// Forest means clamped at zero. Throws InputError on dimension mismatch.
  FlowProposal predict(std::span<const double> context) const override;

  const RegressionForest& board_forest() const noexcept { return board_; }
  const RegressionForest& alight_forest() const noexcept { return alight_; }
  std::size_t input_dim() const noexcept { return board_.input_dim(); }

  void add_to(Digest& d) const;
  bool operator==(const BaggedTreeRegressor& other) const {
    return board_ == other.board_ && alight_ == other.alight_;
  }

  /// Versioned JSON model file ("loadest-flow-model", version 1).
  void save(std::ostream& out) const;
  static BaggedTreeRegressor load(std::istream& in);

 private:
  RegressionForest board_;
  RegressionForest alight_;
};

inline constexpr int kModelFormatVersion = 1;

}  // namespace loadest
