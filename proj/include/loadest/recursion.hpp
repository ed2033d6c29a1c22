#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "loadest/anchor_map.hpp"
#include "loadest/core.hpp"
#include "loadest/feature_matrix.hpp"
#include "loadest/perception.hpp"
#include "loadest/trust.hpp"

namespace loadest {

enum class FusionMode {
  perception_only,  // open-loop cumulative sum, no projection or fusion
  phys_only,        // projection, alpha forced to 1
  fixed,            // alpha0 whenever an anchor is present
  rule,             // trust policy
};

std::string_view to_string(FusionMode mode);

/// Runs the cascade over precomputed proposals and anchors (absent entries
/// mean no usable anchor at that stop). L_0 = 0.
///
/// perception_only reports the clamped shadow as l_phys/l_fused and leaves
/// e_phys at 0; the raw series is kept in Trajectory::shadow.
/// Errors from any stage are rethrown as StageError with the stop index.
Trajectory run_cascade(std::string_view trip_id, std::span<const FlowProposal> proposals,
                       std::span<const std::optional<double>> anchors, const TrustParams& trust, Capacity capacity,
                       FusionMode mode);

/// Anchors for every stop of a trip; all absent when map is null.
std::vector<std::optional<double>> trip_anchors(const Trip& trip, const AnchorMap* map);

/// Predict, project, trust, fuse for one trip. A null anchor map disables anchors.
Trajectory run_trip(const Trip& trip, const FeatureMatrix& contexts, const FlowPredictor& predictor,
                    const AnchorMap* anchors, const TrustParams& trust, Capacity capacity, FusionMode mode);

}  // namespace loadest
