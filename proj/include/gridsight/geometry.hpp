#pragma once

#include <array>
#include <string_view>

namespace gridsight {

// Center-format bounding box; all fields are image fractions.
struct BoxCWH {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double left() const { return cx - w / 2.0; }
  double right() const { return cx + w / 2.0; }
  double top() const { return cy - h / 2.0; }
  double bottom() const { return cy + h / 2.0; }
  double area() const { return w * h; }

  friend bool operator==(const BoxCWH&, const BoxCWH&) = default;
};

enum class IouVariant {
  // Standard intersection over union, in [0, 1].
  Union,
  // Intersection over (union minus intersection). Singular at perfect
  // overlap; the denominator is floored at kEpsArea instead of raised.
  SymmetricDifference,
};

inline constexpr double kEpsArea = 1e-12;

double intersection_area(const BoxCWH& a, const BoxCWH& b);

double iou(const BoxCWH& a, const BoxCWH& b,
           IouVariant variant = IouVariant::Union);

// d(iou)/d(a.cx, a.cy, a.w, a.h) with b held fixed. Piecewise-smooth: zero
// inside the disjoint region and wherever a denominator clamp is active.
std::array<double, 4> iou_grad_first(const BoxCWH& a, const BoxCWH& b,
                                     IouVariant variant = IouVariant::Union);

// Closed containment: every corner of inner within or on outer's boundary.
bool contains(const BoxCWH& outer, const BoxCWH& inner);

struct AnchorPrior {
  std::string_view ratio_tag;
  double w = 0.0;
  double h = 0.0;
};

// Per-anchor extents in cell units: a small trio spanning 1.5 cells and a
// large trio spanning 3, aspect ratios 1:1, 1:2, 2:1, 2:2, 2:4, 4:2.
inline constexpr std::array<double, 6> kPriorCellsW = {1.5, 1.5, 3.0,
                                                       3.0, 3.0, 6.0};
inline constexpr std::array<double, 6> kPriorCellsH = {1.5, 3.0, 1.5,
                                                       3.0, 6.0, 3.0};
inline constexpr std::array<std::string_view, 6> kPriorTags = {
    "1:1", "1:2", "2:1", "2:2", "2:4", "4:2"};

// The six priors for an n-by-n grid, in fixed tag order. n must be >= 1.
std::array<AnchorPrior, 6> anchor_priors(int n);

}  // namespace gridsight
