#pragma once

#include <span>
#include <vector>

#include "gridsight/gridcodec.hpp"

namespace gridsight {

struct NmsConfig {
  double iou_suppress = 0.7;
  // Relative-score threshold of the containment rescue rule.
  double lambda_containment = 0.15;
};

// Greedy per-class suppression with a scale-synthesis twist: a lower-scoring
// box that fully encloses the current top box and sits within the relative
// score margin is kept at the unified (top) score instead of deleted.
// Identical geometry always collapses to the higher-scoring box. Output is
// sorted by score descending, ties by emission order.
std::vector<Detection> nms_scale_synthesis(std::vector<Detection> dets,
                                           const NmsConfig& cfg = {});

// Literal re-implementation of the same contract for differential testing.
// Shares no box arithmetic with the fast path.
std::vector<Detection> nms_reference_oracle(std::vector<Detection> dets,
                                            const NmsConfig& cfg = {});

struct ScoredBox {
  BoxCWH box;
  double fitness = 0.0;
};

// Greedy by fitness descending (ties to the lower index): a slot survives
// unless it overlaps an already-surviving slot above the threshold. Returns
// surviving indices sorted ascending.
std::vector<std::size_t> competitive_filter(std::span<const ScoredBox> slots,
                                            double iou_threshold = 0.7);

}  // namespace gridsight
