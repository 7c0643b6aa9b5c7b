#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridsight/datagen.hpp"
#include "gridsight/gridcodec.hpp"
#include "gridsight/loss.hpp"
#include "gridsight/mining.hpp"
#include "gridsight/optim.hpp"

namespace gridsight {

// Two dense layers, tanh hidden, with per-head output squashings: softmax
// over each cell's class row, logistic for offsets, extents and confidences.
struct ModelParams {
  int feat_dim = 0;
  int hidden = 0;
  int out_dim = 0;
  // Layout: W1 (hidden x feat), b1, W2 (out x hidden), b2.
  std::vector<double> values;

  std::size_t w1_offset() const { return 0; }
  std::size_t b1_offset() const {
    return static_cast<std::size_t>(hidden) * feat_dim;
  }
  std::size_t w2_offset() const { return b1_offset() + hidden; }
  std::size_t b2_offset() const {
    return w2_offset() + static_cast<std::size_t>(out_dim) * hidden;
  }
  std::size_t size() const { return b2_offset() + out_dim; }
};

struct FreezeMask {
  bool layer1 = false;
  bool layer2 = false;
};

ModelParams init_params(int feat_dim, int hidden, int out_dim,
                        std::uint64_t seed);

PredictionTensor forward(const ModelParams& params,
                         std::span<const double> features, int grid_n);

// d(loss)/d(params) given d(loss)/d(prediction); frozen layers get zeros.
std::vector<double> backward(const ModelParams& params,
                             std::span<const double> features,
                             std::span<const double> dloss_dpred,
                             const FreezeMask& freeze = {});

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  std::uint64_t seed = 0;
  int hidden = 64;
  bool shielding = true;
  double competition_iou = 0.7;
  MiningConfig mining{};
  LossConfig loss{};
  LrSchedule schedule{};
  FreezeMask freeze{};
};

struct TrainResult {
  ModelParams params;
  std::vector<LossBreakdown> history; // epoch means of the full loss
};

// Deterministic training: targets are encoded once (shielded, then
// competition-filtered at the prior level), epochs shuffle by a seeded
// permutation, each batch takes one adaptive-moment step on the mining-masked
// gradient at the scheduled rate. `initial` switches to fine-tuning.
TrainResult train(const std::vector<LabeledScene>& dataset,
                  const GridConfig& grid, const TrainConfig& cfg,
                  const ModelParams* initial = nullptr);

// Model file: "gridsight-model v1" magic line, three little-endian uint32
// dimensions, then the flat parameter vector as little-endian 64-bit floats.
void save_params(const ModelParams& params, const std::string& path);
ModelParams load_params(const std::string& path);

// Raises ConfigError naming both shapes when the model cannot serve the
// given grid and feature size.
void check_model_shape(const ModelParams& params, const GridConfig& grid,
                       int feat_dim);

}  // namespace gridsight
