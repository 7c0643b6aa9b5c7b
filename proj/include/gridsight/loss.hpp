#pragma once

#include <span>
#include <vector>

#include "gridsight/gridcodec.hpp"

namespace gridsight {

struct LossConfig {
  double lambda_obj = 0.2;
  double lambda_noobj = 0.1;
  IouVariant iou_variant = IouVariant::Union;
  // Floor/ceiling for the ln argument; bounds the disjoint-box penalty.
  double eps_ratio = 1e-7;
};

struct LossBreakdown {
  double l2_center = 0.0;
  double sqrt_wh = 0.0;
  double iou_obj = 0.0;
  double conf_obj = 0.0;
  double conf_noobj = 0.0;
  double class_term = 0.0;
  double total = 0.0;
};

// Compound loss over all anchor slots; shielded slots contribute nothing.
// Object slots accumulate the center l2, sqrt-extent, squared-log-IoU,
// confidence-vs-IoU and class terms; noobject slots regress confidence to 0.
LossBreakdown compound_loss(const PredictionTensor& pred,
                            const PredictionTensor& target,
                            const AnchorAssignment& assignment,
                            const LossConfig& cfg = {});

// d(total)/d(pred[j]) for every tensor entry; exact on the piecewise-smooth
// regions (away from box-edge coincidences and active clamps).
std::vector<double> compound_loss_grad(const PredictionTensor& pred,
                                       const PredictionTensor& target,
                                       const AnchorAssignment& assignment,
                                       const LossConfig& cfg = {});

// Each slot's own contribution to the total; the mining selector's input.
std::vector<double> per_slot_losses(const PredictionTensor& pred,
                                    const PredictionTensor& target,
                                    const AnchorAssignment& assignment,
                                    const LossConfig& cfg = {});

// Zeroes gradient entries of every slot not in `keep` (sorted indices):
// its coordinates and confidence, plus the cell's class row for dropped
// object slots.
void mask_gradient_to_slots(std::vector<double>& grad,
                            std::span<const std::size_t> keep,
                            const AnchorAssignment& assignment);

}  // namespace gridsight
