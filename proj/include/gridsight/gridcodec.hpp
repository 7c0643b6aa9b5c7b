#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gridsight/geometry.hpp"

namespace gridsight {

inline constexpr int kAnchorsPerCell = 6;
inline constexpr int kClasses = 6;
inline constexpr int kCellStride = kClasses + 4 * kAnchorsPerCell + kAnchorsPerCell;

// Class ids: 0 person, 1 bicycle (nonmotor), 2 motorcycle, 3 car, 4 truck,
// 5 bus.
inline constexpr std::array<std::string_view, kClasses> kClassNames = {
    "person", "bicycle", "motorcycle", "car", "truck", "bus"};

struct GridConfig {
  int n = 9;
  std::array<AnchorPrior, 6> priors;

  explicit GridConfig(int grid_n = 9) : n(grid_n), priors(anchor_priors(grid_n)) {}

  int cells() const { return n * n; }
  int slots() const { return n * n * kAnchorsPerCell; }
  int tensor_length() const { return n * n * kCellStride; }
};

// Flat per-cell layout: [6 class probs][6 x (a, b, w, h)][6 confidences].
// (a, b) are within-cell offsets in [0, 1]; (w, h) are image fractions.
inline std::size_t class_index(int cell, int cls) {
  return static_cast<std::size_t>(cell) * kCellStride + cls;
}
inline std::size_t coord_index(int cell, int anchor, int k) {
  return static_cast<std::size_t>(cell) * kCellStride + kClasses + 4 * anchor + k;
}
inline std::size_t conf_index(int cell, int anchor) {
  return static_cast<std::size_t>(cell) * kCellStride + kClasses +
         4 * kAnchorsPerCell + anchor;
}
inline int slot_index(int cell, int anchor) {
  return cell * kAnchorsPerCell + anchor;
}

struct PredictionTensor {
  int n = 0;
  std::vector<double> values;

  double& at(std::size_t i) { return values[i]; }
  double at(std::size_t i) const { return values[i]; }

  // Box of one anchor slot in absolute image coordinates.
  BoxCWH slot_box(int cell, int anchor) const {
    const int row = cell / n;
    const int col = cell % n;
    return BoxCWH{(col + values[coord_index(cell, anchor, 0)]) / n,
                  (row + values[coord_index(cell, anchor, 1)]) / n,
                  values[coord_index(cell, anchor, 2)],
                  values[coord_index(cell, anchor, 3)]};
  }
};

PredictionTensor make_tensor(const GridConfig& cfg);

struct GroundTruth {
  BoxCWH box;
  int class_id = 0;
};

struct Detection {
  BoxCWH box;
  int class_id = 0;
  double score = 0.0;
};

enum class SlotLabel : std::uint8_t { Noobject = 0, Object = 1, Shielded = 2 };

struct AnchorAssignment {
  int n = 0;
  std::vector<SlotLabel> labels;        // one per anchor slot
  std::vector<std::int32_t> matched_gt; // index into the encoded gts, -1 if none

  std::vector<std::size_t> object_slots() const;
};

struct EncodeResult {
  PredictionTensor target;
  AnchorAssignment assignment;
  std::vector<std::size_t> dropped; // gt indices discarded by the one-per-cell rule
};

// Builds the training target for a list of ground truths. The responsible
// cell is the one containing the GT center (coordinate 1.0 clamps into the
// last cell); the object anchor is the prior with the highest union-IoU
// against the GT translated to the cell center, ties to the lowest index.
// When several GT centers share a cell only the largest-area one is kept.
EncodeResult encode(std::span<const GroundTruth> gts, const GridConfig& cfg);

// Emits every slot whose confidence * max class probability clears the
// threshold, sorted by score descending, ties by (cell, anchor).
std::vector<Detection> decode(const PredictionTensor& pred,
                              const GridConfig& cfg, double conf_threshold);

// True for slots whose prior, centered on the cell, extends strictly beyond
// the image. Computed in cell units so boundary-touching priors stay live.
std::vector<std::uint8_t> shield_mask(const GridConfig& cfg);

// Marks masked slots shielded; masked object slots lose their ground truth.
void apply_shielding(AnchorAssignment& assignment,
                     std::span<const std::uint8_t> mask);

// Tensor file format: one ASCII header line "gridsight-tensor v1 n=<n>"
// followed by the flat vector as little-endian 64-bit floats.
void write_tensor(const PredictionTensor& t, const std::string& path);
PredictionTensor read_tensor(const std::string& path);

}  // namespace gridsight
