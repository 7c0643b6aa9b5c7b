#include "gridsight/mining.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gridsight/errors.hpp"

namespace gridsight {

std::vector<std::size_t> select_hard(std::span<const double> losses,
                                     std::span<const std::size_t> positives,
                                     const MiningConfig& cfg) {
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (!std::isfinite(losses[i]) || losses[i] < 0.0) {
      throw DataError("select_hard: loss at index " + std::to_string(i) +
                      " is negative or non-finite");
    }
  }
  std::vector<std::uint8_t> is_positive(losses.size(), 0);
  for (std::size_t p : positives) {
    if (p >= losses.size()) {
      throw ConfigError("select_hard: positive index " + std::to_string(p) +
                        " out of range");
    }
    is_positive[p] = 1;
  }

  auto harder = [&](std::size_t a, std::size_t b) {
    if (losses[a] != losses[b]) return losses[a] > losses[b];
    return a < b;
  };

  std::vector<std::size_t> kept;
  if (cfg.mode == MiningMode::TopK) {
    if (cfg.k < 1) throw ConfigError("select_hard: topk requires k >= 1");
    std::vector<std::size_t> order(losses.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), harder);
    order.resize(std::min<std::size_t>(cfg.k, order.size()));
    kept = std::move(order);
  } else {
    if (cfg.neg_per_pos < 1) {
      throw ConfigError("select_hard: ratio mode requires neg_per_pos >= 1");
    }
    std::vector<std::size_t> negatives;
    for (std::size_t i = 0; i < losses.size(); ++i) {
      if (!is_positive[i]) negatives.push_back(i);
    }
    std::sort(negatives.begin(), negatives.end(), harder);
    const std::size_t quota =
        positives.empty() ? cfg.neg_per_pos : cfg.neg_per_pos * positives.size();
    negatives.resize(std::min(quota, negatives.size()));
    kept.assign(positives.begin(), positives.end());
    kept.insert(kept.end(), negatives.begin(), negatives.end());
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

}  // namespace gridsight
