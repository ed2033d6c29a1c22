#include "loadest/recursion.hpp"

#include <algorithm>
#include <string>

#include "loadest/projection.hpp"

namespace loadest {

std::string_view to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::perception_only: return "perception_only";
    case FusionMode::phys_only: return "phys_only";
    case FusionMode::fixed: return "fixed";
    case FusionMode::rule: return "rule";
  }
  return "unknown";
}

Trajectory run_cascade(std::string_view trip_id, std::span<const FlowProposal> proposals,
                       std::span<const std::optional<double>> anchors, const TrustParams& trust, Capacity capacity,
                       FusionMode mode) {
  const std::string id(trip_id);
  if (anchors.size() != proposals.size()) {
    throw StageError(id, -1, "anchor list length differs from proposal list");
  }
  const double c = capacity.value();
  Trajectory out;
  out.trip_id = id;
  out.steps.reserve(proposals.size());
  out.shadow.reserve(proposals.size());

  double shadow = 0.0;
  double state = 0.0;
  for (std::size_t k = 0; k < proposals.size(); ++k) {
    try {
      StepTrace s;
      s.b_hat = proposals[k].board;
      s.a_hat = proposals[k].alight;
      if (!(s.b_hat >= 0.0) || !(s.a_hat >= 0.0)) throw ContractViolation("negative or NaN flow proposal");
      shadow += s.b_hat - s.a_hat;
      out.shadow.push_back(shadow);

      if (mode == FusionMode::perception_only) {
        s.a_star = s.a_hat;
        s.b_star = s.b_hat;
        s.l_phys = std::clamp(shadow, 0.0, c);
        s.l_fused = s.l_phys;
        out.steps.push_back(s);
        continue;
      }

      const Projection p = project(state, s.b_hat, s.a_hat, capacity);
      s.a_star = p.a_star;
      s.b_star = p.b_star;
      s.l_phys = p.l_phys;
      s.e_phys = p.e_phys;

      const std::optional<double> anchor = anchors[k];
      if (anchor && mode != FusionMode::phys_only) {
        if (!(*anchor >= 0.0)) throw ContractViolation("negative anchor");
        s.anchor = anchor;
        s.disagreement = disagreement(*anchor, s.l_phys);
        s.alpha = mode == FusionMode::fixed ? trust.alpha0 : trust_weight(true, *s.disagreement, s.e_phys, trust);
        s.l_fused = fuse(s.l_phys, s.anchor, *s.alpha, capacity);
      } else {
        if (anchor) {
          // phys_only still records the anchor it ignores.
          s.anchor = anchor;
          s.disagreement = disagreement(*anchor, s.l_phys);
          s.alpha = 1.0;
        }
        s.l_fused = fuse(s.l_phys, std::nullopt, 1.0, capacity);
      }
      state = s.l_fused;
      out.steps.push_back(s);
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(id, static_cast<int>(k), e.what());
    }
  }
  out.l_final.reserve(out.steps.size());
  for (const StepTrace& s : out.steps) out.l_final.push_back(s.l_fused);
  return out;
}

std::vector<std::optional<double>> trip_anchors(const Trip& trip, const AnchorMap* map) {
  std::vector<std::optional<double>> out(trip.size());
  if (map == nullptr) return out;
  for (std::size_t k = 0; k < trip.size(); ++k) out[k] = anchor_for(*map, trip.stops[k]);
  return out;
}

Trajectory run_trip(const Trip& trip, const FeatureMatrix& contexts, const FlowPredictor& predictor,
                    const AnchorMap* anchors, const TrustParams& trust, Capacity capacity, FusionMode mode) {
  std::vector<FlowProposal> proposals;
  try {
    proposals = predictor.predict_trip(trip, contexts);
  } catch (const std::exception& e) {
    throw StageError(trip.trip_id, 0, std::string("perception: ") + e.what());
  }
  const auto a = trip_anchors(trip, anchors);
  return run_cascade(trip.trip_id, proposals, a, trust, capacity, mode);
}

}  // namespace loadest
