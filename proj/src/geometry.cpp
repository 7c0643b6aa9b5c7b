#include "gridsight/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "gridsight/errors.hpp"

namespace gridsight {

double intersection_area(const BoxCWH& a, const BoxCWH& b) {
  const double ox =
      std::min(a.right(), b.right()) - std::max(a.left(), b.left());
  const double oy =
      std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
  if (ox <= 0.0 || oy <= 0.0) return 0.0;
  return ox * oy;
}

double iou(const BoxCWH& a, const BoxCWH& b, IouVariant variant) {
  if (a == b) {
    // The corner round-trip (cx + w/2) - (cx - w/2) is not exactly w, so the
    // self-overlap case is answered directly to keep iou(a, a) == 1.
    if (variant == IouVariant::Union) return 1.0;
    return a.area() / kEpsArea;
  }
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (variant == IouVariant::Union) return inter / uni;
  return inter / std::max(uni - inter, kEpsArea);
}

std::array<double, 4> iou_grad_first(const BoxCWH& a, const BoxCWH& b,
                                     IouVariant variant) {
  const double lx = std::max(a.left(), b.left());
  const double rx = std::min(a.right(), b.right());
  const double ly = std::max(a.top(), b.top());
  const double ry = std::min(a.bottom(), b.bottom());
  const double ox = rx - lx;
  const double oy = ry - ly;
  if (ox <= 0.0 || oy <= 0.0) return {0.0, 0.0, 0.0, 0.0};

  // Which edge of the overlap belongs to box a decides the partials.
  const double rx_a = a.right() <= b.right() ? 1.0 : 0.0;
  const double lx_a = a.left() >= b.left() ? 1.0 : 0.0;
  const double ry_a = a.bottom() <= b.bottom() ? 1.0 : 0.0;
  const double ly_a = a.top() >= b.top() ? 1.0 : 0.0;

  const double dI_dcx = oy * (rx_a - lx_a);
  const double dI_dw = oy * 0.5 * (rx_a + lx_a);
  const double dI_dcy = ox * (ry_a - ly_a);
  const double dI_dh = ox * 0.5 * (ry_a + ly_a);

  const double inter = ox * oy;
  const double uni = a.area() + b.area() - inter;
  const double dU_dcx = -dI_dcx;
  const double dU_dcy = -dI_dcy;
  const double dU_dw = a.h - dI_dw;
  const double dU_dh = a.w - dI_dh;

  if (variant == IouVariant::Union) {
    const double inv = 1.0 / (uni * uni);
    return {(dI_dcx * uni - inter * dU_dcx) * inv,
            (dI_dcy * uni - inter * dU_dcy) * inv,
            (dI_dw * uni - inter * dU_dw) * inv,
            (dI_dh * uni - inter * dU_dh) * inv};
  }

  const double denom = uni - inter;
  if (denom <= kEpsArea) {
    // Clamped denominator: the ratio varies only through the numerator.
    return {dI_dcx / kEpsArea, dI_dcy / kEpsArea, dI_dw / kEpsArea,
            dI_dh / kEpsArea};
  }
  const double inv = 1.0 / (denom * denom);
  return {(dI_dcx * denom - inter * (dU_dcx - dI_dcx)) * inv,
          (dI_dcy * denom - inter * (dU_dcy - dI_dcy)) * inv,
          (dI_dw * denom - inter * (dU_dw - dI_dw)) * inv,
          (dI_dh * denom - inter * (dU_dh - dI_dh)) * inv};
}

bool contains(const BoxCWH& outer, const BoxCWH& inner) {
  return inner.left() >= outer.left() && inner.right() <= outer.right() &&
         inner.top() >= outer.top() && inner.bottom() <= outer.bottom();
}

std::array<AnchorPrior, 6> anchor_priors(int n) {
  if (n < 1) throw ConfigError("anchor_priors: grid size must be >= 1");
  std::array<AnchorPrior, 6> priors;
  for (std::size_t i = 0; i < priors.size(); ++i) {
    priors[i] = AnchorPrior{kPriorTags[i], kPriorCellsW[i] / n,
                            kPriorCellsH[i] / n};
  }
  return priors;
}

}  // namespace gridsight
