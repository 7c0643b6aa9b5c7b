#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gridsight {

enum class MiningMode {
  // Keep the k highest-loss slots overall.
  TopK,
  // Keep every positive plus the hardest negatives at a fixed ratio.
  Ratio,
};

struct MiningConfig {
  MiningMode mode = MiningMode::Ratio;
  std::size_t k = 1;
  std::size_t neg_per_pos = 3;
};

// Hard-example selection over per-slot losses. Ties break toward the lower
// index; the result is sorted ascending. Gradient contributions outside the
// returned set are zeroed by the caller. k larger than the slot count keeps
// everything; with no positives, ratio mode keeps the top neg_per_pos
// negatives.
std::vector<std::size_t> select_hard(std::span<const double> losses,
                                     std::span<const std::size_t> positives,
                                     const MiningConfig& cfg = {});

}  // namespace gridsight
