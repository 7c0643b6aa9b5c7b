#include "gridsight/loss.hpp"

#include <algorithm>
#include <cmath>

#include "gridsight/errors.hpp"

namespace gridsight {

namespace {

void check_inputs(const PredictionTensor& pred, const PredictionTensor& target,
                  const AnchorAssignment& assignment, const LossConfig& cfg) {
  if (pred.n != target.n || pred.values.size() != target.values.size()) {
    throw ConfigError("loss: prediction and target grids differ (n=" +
                      std::to_string(pred.n) + " vs n=" +
                      std::to_string(target.n) + ")");
  }
  if (assignment.n != pred.n ||
      assignment.labels.size() !=
          static_cast<std::size_t>(pred.n) * pred.n * kAnchorsPerCell) {
    throw ConfigError("loss: assignment does not match the tensor grid");
  }
  if (!(cfg.lambda_obj > 0.0) || !(cfg.lambda_noobj > 0.0) ||
      !(cfg.eps_ratio > 0.0 && cfg.eps_ratio < 1.0)) {
    throw ConfigError("loss: invalid weights or eps_ratio");
  }
}

double clamp_ratio(double r, double eps) {
  return std::clamp(r, eps, 1.0 / eps);
}

struct SlotTerms {
  double l2 = 0.0;
  double sqrt_wh = 0.0;
  double iou_obj = 0.0;
  double conf_obj = 0.0;
  double conf_noobj = 0.0;
  double class_term = 0.0;

  double sum() const {
    return l2 + sqrt_wh + iou_obj + conf_obj + conf_noobj + class_term;
  }
};

SlotTerms slot_terms(const PredictionTensor& pred,
                     const PredictionTensor& target, SlotLabel label, int cell,
                     int anchor, const LossConfig& cfg) {
  SlotTerms t;
  if (label == SlotLabel::Shielded) return t;
  const double c = pred.values[conf_index(cell, anchor)];
  if (label == SlotLabel::Noobject) {
    t.conf_noobj = cfg.lambda_noobj * c * c;
    return t;
  }

  const BoxCWH sp = pred.slot_box(cell, anchor);
  const BoxCWH sg = target.slot_box(cell, anchor);
  t.l2 = (sp.cx - sg.cx) * (sp.cx - sg.cx) + (sp.cy - sg.cy) * (sp.cy - sg.cy);
  const double dw = std::sqrt(sp.w) - std::sqrt(sg.w);
  const double dh = std::sqrt(sp.h) - std::sqrt(sg.h);
  t.sqrt_wh = dw * dw + dh * dh;

  const double lr =
      std::log(clamp_ratio(iou(sp, sg, cfg.iou_variant), cfg.eps_ratio));
  t.iou_obj = cfg.lambda_obj * lr * lr;

  const double ru = iou(sp, sg, IouVariant::Union);
  t.conf_obj = cfg.lambda_obj * (c - ru) * (c - ru);

  for (int k = 0; k < kClasses; ++k) {
    const double d =
        pred.values[class_index(cell, k)] - target.values[class_index(cell, k)];
    t.class_term += cfg.lambda_obj * d * d;
  }
  return t;
}

}  // namespace

LossBreakdown compound_loss(const PredictionTensor& pred,
                            const PredictionTensor& target,
                            const AnchorAssignment& assignment,
                            const LossConfig& cfg) {
  check_inputs(pred, target, assignment, cfg);
  LossBreakdown b;
  for (int cell = 0; cell < pred.n * pred.n; ++cell) {
    for (int a = 0; a < kAnchorsPerCell; ++a) {
      const auto t = slot_terms(pred, target,
                                assignment.labels[slot_index(cell, a)], cell, a,
                                cfg);
      b.l2_center += t.l2;
      b.sqrt_wh += t.sqrt_wh;
      b.iou_obj += t.iou_obj;
      b.conf_obj += t.conf_obj;
      b.conf_noobj += t.conf_noobj;
      b.class_term += t.class_term;
    }
  }
  b.total = b.l2_center + b.sqrt_wh + b.iou_obj + b.conf_obj + b.conf_noobj +
            b.class_term;
  return b;
}

std::vector<double> per_slot_losses(const PredictionTensor& pred,
                                    const PredictionTensor& target,
                                    const AnchorAssignment& assignment,
                                    const LossConfig& cfg) {
  check_inputs(pred, target, assignment, cfg);
  std::vector<double> losses(assignment.labels.size(), 0.0);
  for (int cell = 0; cell < pred.n * pred.n; ++cell) {
    for (int a = 0; a < kAnchorsPerCell; ++a) {
      const int slot = slot_index(cell, a);
      losses[slot] =
          slot_terms(pred, target, assignment.labels[slot], cell, a, cfg).sum();
    }
  }
  return losses;
}

std::vector<double> compound_loss_grad(const PredictionTensor& pred,
                                       const PredictionTensor& target,
                                       const AnchorAssignment& assignment,
                                       const LossConfig& cfg) {
  check_inputs(pred, target, assignment, cfg);
  std::vector<double> grad(pred.values.size(), 0.0);
  const int n = pred.n;

  for (int cell = 0; cell < n * n; ++cell) {
    for (int a = 0; a < kAnchorsPerCell; ++a) {
      const SlotLabel label = assignment.labels[slot_index(cell, a)];
      if (label == SlotLabel::Shielded) continue;
      const double c = pred.values[conf_index(cell, a)];

      if (label == SlotLabel::Noobject) {
        grad[conf_index(cell, a)] += 2.0 * cfg.lambda_noobj * c;
        continue;
      }

      const BoxCWH sp = pred.slot_box(cell, a);
      const BoxCWH sg = target.slot_box(cell, a);

      // Accumulated d(total)/d(cx, cy, w, h) of the predicted box.
      double d_cx = 2.0 * (sp.cx - sg.cx);
      double d_cy = 2.0 * (sp.cy - sg.cy);
      double d_w = 1.0 - std::sqrt(sg.w) / std::sqrt(sp.w);
      double d_h = 1.0 - std::sqrt(sg.h) / std::sqrt(sp.h);

      const double r_cfg = iou(sp, sg, cfg.iou_variant);
      if (r_cfg > cfg.eps_ratio && r_cfg < 1.0 / cfg.eps_ratio) {
        const auto g = iou_grad_first(sp, sg, cfg.iou_variant);
        const double f = cfg.lambda_obj * 2.0 * std::log(r_cfg) / r_cfg;
        d_cx += f * g[0];
        d_cy += f * g[1];
        d_w += f * g[2];
        d_h += f * g[3];
      }

      const double ru = iou(sp, sg, IouVariant::Union);
      const double conf_res = 2.0 * cfg.lambda_obj * (c - ru);
      grad[conf_index(cell, a)] += conf_res;
      {
        // The confidence target moves with the predicted box.
        const auto g = iou_grad_first(sp, sg, IouVariant::Union);
        d_cx -= conf_res * g[0];
        d_cy -= conf_res * g[1];
        d_w -= conf_res * g[2];
        d_h -= conf_res * g[3];
      }

      grad[coord_index(cell, a, 0)] += d_cx / n;
      grad[coord_index(cell, a, 1)] += d_cy / n;
      grad[coord_index(cell, a, 2)] += d_w;
      grad[coord_index(cell, a, 3)] += d_h;

      for (int k = 0; k < kClasses; ++k) {
        grad[class_index(cell, k)] +=
            2.0 * cfg.lambda_obj *
            (pred.values[class_index(cell, k)] -
             target.values[class_index(cell, k)]);
      }
    }
  }
  return grad;
}

void mask_gradient_to_slots(std::vector<double>& grad,
                            std::span<const std::size_t> keep,
                            const AnchorAssignment& assignment) {
  std::vector<std::uint8_t> kept(assignment.labels.size(), 0);
  for (std::size_t s : keep) {
    if (s >= kept.size()) {
      throw ConfigError("mask_gradient_to_slots: slot index out of range");
    }
    kept[s] = 1;
  }
  const std::size_t slots = assignment.labels.size();
  for (std::size_t slot = 0; slot < slots; ++slot) {
    if (kept[slot]) continue;
    const int cell = static_cast<int>(slot) / kAnchorsPerCell;
    const int anchor = static_cast<int>(slot) % kAnchorsPerCell;
    for (int k = 0; k < 4; ++k) grad[coord_index(cell, anchor, k)] = 0.0;
    grad[conf_index(cell, anchor)] = 0.0;
    if (assignment.labels[slot] == SlotLabel::Object) {
      for (int k = 0; k < kClasses; ++k) grad[class_index(cell, k)] = 0.0;
    }
  }
}

}  // namespace gridsight
