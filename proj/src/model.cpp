#include "gridsight/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "gridsight/errors.hpp"
#include "gridsight/nms.hpp"
#include "gridsight/rng.hpp"

namespace gridsight {

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct ForwardCache {
  std::vector<double> hidden;  // tanh activations
  PredictionTensor pred;
};

ForwardCache run_forward(const ModelParams& p, std::span<const double> x,
                         int grid_n) {
  if (static_cast<int>(x.size()) != p.feat_dim) {
    throw ConfigError("forward: feature length " + std::to_string(x.size()) +
                      " != model feat_dim " + std::to_string(p.feat_dim));
  }
  if (grid_n * grid_n * kCellStride != p.out_dim) {
    throw ConfigError("forward: model out_dim " + std::to_string(p.out_dim) +
                      " does not fit grid n=" + std::to_string(grid_n));
  }
  ForwardCache cache;
  cache.hidden.resize(p.hidden);
  const double* w1 = p.values.data() + p.w1_offset();
  const double* b1 = p.values.data() + p.b1_offset();
  const double* w2 = p.values.data() + p.w2_offset();
  const double* b2 = p.values.data() + p.b2_offset();

  for (int j = 0; j < p.hidden; ++j) {
    double z = b1[j];
    const double* row = w1 + static_cast<std::size_t>(j) * p.feat_dim;
    for (int i = 0; i < p.feat_dim; ++i) z += row[i] * x[i];
    cache.hidden[j] = std::tanh(z);
  }

  std::vector<double> z2(p.out_dim);
  for (int o = 0; o < p.out_dim; ++o) {
    double z = b2[o];
    const double* row = w2 + static_cast<std::size_t>(o) * p.hidden;
    for (int j = 0; j < p.hidden; ++j) z += row[j] * cache.hidden[j];
    z2[o] = z;
  }

  cache.pred.n = grid_n;
  cache.pred.values.resize(p.out_dim);
  auto& v = cache.pred.values;
  for (int cell = 0; cell < grid_n * grid_n; ++cell) {
    // Softmax class row, max-subtracted.
    double zmax = z2[class_index(cell, 0)];
    for (int c = 1; c < kClasses; ++c) {
      zmax = std::max(zmax, z2[class_index(cell, c)]);
    }
    double sum = 0.0;
    for (int c = 0; c < kClasses; ++c) {
      const double e = std::exp(z2[class_index(cell, c)] - zmax);
      v[class_index(cell, c)] = e;
      sum += e;
    }
    for (int c = 0; c < kClasses; ++c) v[class_index(cell, c)] /= sum;

    for (int a = 0; a < kAnchorsPerCell; ++a) {
      for (int k = 0; k < 4; ++k) {
        v[coord_index(cell, a, k)] = logistic(z2[coord_index(cell, a, k)]);
      }
      v[conf_index(cell, a)] = logistic(z2[conf_index(cell, a)]);
    }
  }
  return cache;
}

}  // namespace

ModelParams init_params(int feat_dim, int hidden, int out_dim,
                        std::uint64_t seed) {
  if (feat_dim < 1 || hidden < 1 || out_dim < 1) {
    throw ConfigError("init_params: dimensions must be positive");
  }
  ModelParams p;
  p.feat_dim = feat_dim;
  p.hidden = hidden;
  p.out_dim = out_dim;
  p.values.assign(p.size(), 0.0);

  Rng rng(Rng::mix(seed, 0x6d6f64656cull));
  const double lim1 = std::sqrt(6.0 / (feat_dim + hidden));
  for (std::size_t i = 0; i < static_cast<std::size_t>(hidden) * feat_dim; ++i) {
    p.values[p.w1_offset() + i] = rng.uniform(-lim1, lim1);
  }
  const double lim2 = std::sqrt(6.0 / (hidden + out_dim));
  for (std::size_t i = 0; i < static_cast<std::size_t>(out_dim) * hidden; ++i) {
    p.values[p.w2_offset() + i] = rng.uniform(-lim2, lim2);
  }
  // Biases start at zero.
  return p;
}

PredictionTensor forward(const ModelParams& params,
                         std::span<const double> features, int grid_n) {
  return run_forward(params, features, grid_n).pred;
}

std::vector<double> backward(const ModelParams& p,
                             std::span<const double> x,
                             std::span<const double> dloss_dpred,
                             const FreezeMask& freeze) {
  if (dloss_dpred.size() != static_cast<std::size_t>(p.out_dim)) {
    throw ConfigError("backward: gradient length " +
                      std::to_string(dloss_dpred.size()) + " != out_dim " +
                      std::to_string(p.out_dim));
  }
  const int grid_n = static_cast<int>(std::lround(
      std::sqrt(static_cast<double>(p.out_dim) / kCellStride)));
  const ForwardCache cache = run_forward(p, x, grid_n);
  const auto& v = cache.pred.values;

  // Head squashings first: dL/dz2.
  std::vector<double> dz2(p.out_dim, 0.0);
  for (int cell = 0; cell < grid_n * grid_n; ++cell) {
    double dot = 0.0;
    for (int c = 0; c < kClasses; ++c) {
      dot += dloss_dpred[class_index(cell, c)] * v[class_index(cell, c)];
    }
    for (int c = 0; c < kClasses; ++c) {
      const std::size_t idx = class_index(cell, c);
      dz2[idx] = v[idx] * (dloss_dpred[idx] - dot);
    }
    for (int a = 0; a < kAnchorsPerCell; ++a) {
      for (int k = 0; k < 4; ++k) {
        const std::size_t idx = coord_index(cell, a, k);
        dz2[idx] = dloss_dpred[idx] * v[idx] * (1.0 - v[idx]);
      }
      const std::size_t idx = conf_index(cell, a);
      dz2[idx] = dloss_dpred[idx] * v[idx] * (1.0 - v[idx]);
    }
  }

  std::vector<double> grads(p.size(), 0.0);
  const double* w2 = p.values.data() + p.w2_offset();
  double* gw2 = grads.data() + p.w2_offset();
  double* gb2 = grads.data() + p.b2_offset();

  std::vector<double> dh(p.hidden, 0.0);
  for (int o = 0; o < p.out_dim; ++o) {
    const double g = dz2[o];
    if (g == 0.0) continue;
    const double* row = w2 + static_cast<std::size_t>(o) * p.hidden;
    double* grow = gw2 + static_cast<std::size_t>(o) * p.hidden;
    for (int j = 0; j < p.hidden; ++j) {
      grow[j] += g * cache.hidden[j];
      dh[j] += g * row[j];
    }
    gb2[o] += g;
  }

  if (!freeze.layer1) {
    double* gw1 = grads.data() + p.w1_offset();
    double* gb1 = grads.data() + p.b1_offset();
    for (int j = 0; j < p.hidden; ++j) {
      const double t = cache.hidden[j];
      const double dz1 = dh[j] * (1.0 - t * t);
      if (dz1 == 0.0) continue;
      double* grow = gw1 + static_cast<std::size_t>(j) * p.feat_dim;
      for (int i = 0; i < p.feat_dim; ++i) grow[i] += dz1 * x[i];
      gb1[j] += dz1;
    }
  }
  if (freeze.layer2) {
    std::fill(grads.begin() + static_cast<std::ptrdiff_t>(p.w2_offset()),
              grads.end(), 0.0);
  }
  return grads;
}

namespace {

struct EncodedScene {
  PredictionTensor target;
  AnchorAssignment assignment;
  std::vector<std::size_t> positives;
};

EncodedScene prepare_scene(const LabeledScene& scene, const GridConfig& grid,
                           const TrainConfig& cfg,
                           std::span<const std::uint8_t> mask) {
  EncodedScene out;
  auto enc = encode(scene.gts, grid);
  out.target = std::move(enc.target);
  out.assignment = std::move(enc.assignment);
  if (cfg.shielding) apply_shielding(out.assignment, mask);

  // Object priors compete at the configured overlap; losers leave the loss
  // entirely. Fitness is the prior's overlap with its own ground truth.
  auto objects = out.assignment.object_slots();
  if (objects.size() > 1) {
    std::vector<ScoredBox> boxes;
    boxes.reserve(objects.size());
    for (std::size_t slot : objects) {
      const int cell = static_cast<int>(slot) / kAnchorsPerCell;
      const int anchor = static_cast<int>(slot) % kAnchorsPerCell;
      const int row = cell / grid.n;
      const int col = cell % grid.n;
      const BoxCWH prior{(col + 0.5) / grid.n, (row + 0.5) / grid.n,
                         grid.priors[anchor].w, grid.priors[anchor].h};
      const auto gi = out.assignment.matched_gt[slot];
      const BoxCWH gt_box = scene.gts[static_cast<std::size_t>(gi)].box;
      boxes.push_back({prior, iou(prior, gt_box, IouVariant::Union)});
    }
    const auto survivors = competitive_filter(boxes, cfg.competition_iou);
    std::vector<std::uint8_t> alive(objects.size(), 0);
    for (std::size_t s : survivors) alive[s] = 1;
    for (std::size_t k = 0; k < objects.size(); ++k) {
      if (alive[k]) continue;
      out.assignment.labels[objects[k]] = SlotLabel::Shielded;
      out.assignment.matched_gt[objects[k]] = -1;
    }
  }
  out.positives = out.assignment.object_slots();
  return out;
}

void add_breakdown(LossBreakdown& acc, const LossBreakdown& b) {
  acc.l2_center += b.l2_center;
  acc.sqrt_wh += b.sqrt_wh;
  acc.iou_obj += b.iou_obj;
  acc.conf_obj += b.conf_obj;
  acc.conf_noobj += b.conf_noobj;
  acc.class_term += b.class_term;
  acc.total += b.total;
}

void scale_breakdown(LossBreakdown& acc, double s) {
  acc.l2_center *= s;
  acc.sqrt_wh *= s;
  acc.iou_obj *= s;
  acc.conf_obj *= s;
  acc.conf_noobj *= s;
  acc.class_term *= s;
  acc.total *= s;
}

}  // namespace

TrainResult train(const std::vector<LabeledScene>& dataset,
                  const GridConfig& grid, const TrainConfig& cfg,
                  const ModelParams* initial) {
  if (dataset.empty()) throw ConfigError("train: dataset is empty");
  if (cfg.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  const int feat_dim = static_cast<int>(dataset[0].features.size());
  for (const auto& scene : dataset) {
    if (static_cast<int>(scene.features.size()) != feat_dim) {
      throw ConfigError("train: inconsistent feature lengths in dataset");
    }
  }

  const auto mask = shield_mask(grid);
  std::vector<EncodedScene> encoded;
  encoded.reserve(dataset.size());
  for (const auto& scene : dataset) {
    encoded.push_back(prepare_scene(scene, grid, cfg, mask));
  }

  TrainResult result;
  if (initial) {
    check_model_shape(*initial, grid, feat_dim);
    result.params = *initial;
  } else {
    result.params = init_params(feat_dim, cfg.hidden, grid.tensor_length(),
                                cfg.seed);
  }

  AdamState adam(result.params.size());
  LrSchedule schedule = cfg.schedule;
  schedule.total_epochs = cfg.epochs;

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double eta = lr_at(schedule, epoch);
    Rng shuffle_rng(Rng::mix(cfg.seed, 0x45504f43ull + epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(
                    shuffle_rng.uniform_int(0, static_cast<int>(i) - 1))]);
    }

    LossBreakdown epoch_mean;
    std::vector<double> grad_accum(result.params.size());
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::fill(grad_accum.begin(), grad_accum.end(), 0.0);
      for (std::size_t k = start; k < stop; ++k) {
        const auto& scene = dataset[order[k]];
        const auto& enc = encoded[order[k]];
        const auto pred = forward(result.params, scene.features, grid.n);
        const auto breakdown =
            compound_loss(pred, enc.target, enc.assignment, cfg.loss);
        add_breakdown(epoch_mean, breakdown);

        const auto slot_losses =
            per_slot_losses(pred, enc.target, enc.assignment, cfg.loss);
        const auto keep = select_hard(slot_losses, enc.positives, cfg.mining);
        auto dpred =
            compound_loss_grad(pred, enc.target, enc.assignment, cfg.loss);
        mask_gradient_to_slots(dpred, keep, enc.assignment);
        const auto dparams =
            backward(result.params, scene.features, dpred, cfg.freeze);
        for (std::size_t j = 0; j < grad_accum.size(); ++j) {
          grad_accum[j] += dparams[j];
        }
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (double& g : grad_accum) g *= inv;
      adam_step(adam, grad_accum, result.params.values, eta);
    }
    scale_breakdown(epoch_mean, 1.0 / static_cast<double>(dataset.size()));
    result.history.push_back(epoch_mean);
  }
  return result;
}

namespace {

constexpr std::string_view kModelMagic = "gridsight-model v1";

void put_u32_le(std::ofstream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>(v >> (8 * i));
  out.write(b, 4);
}

std::uint32_t get_u32_le(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw IoError("truncated header in " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_params(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << kModelMagic << '\n';
  put_u32_le(out, static_cast<std::uint32_t>(params.feat_dim));
  put_u32_le(out, static_cast<std::uint32_t>(params.hidden));
  put_u32_le(out, static_cast<std::uint32_t>(params.out_dim));
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(params.values.data()),
              static_cast<std::streamsize>(params.values.size() * sizeof(double)));
  } else {
    for (double d : params.values) {
      std::uint64_t u;
      std::memcpy(&u, &d, sizeof(u));
      char b[8];
      for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(u >> (8 * i));
      out.write(b, 8);
    }
  }
  if (!out) throw IoError("write failed for " + path);
}

ModelParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  if (!std::getline(in, magic) || magic != kModelMagic) {
    throw IoError("bad model magic in " + path + " (expected '" +
                  std::string(kModelMagic) + "')");
  }
  ModelParams p;
  p.feat_dim = static_cast<int>(get_u32_le(in, path));
  p.hidden = static_cast<int>(get_u32_le(in, path));
  p.out_dim = static_cast<int>(get_u32_le(in, path));
  if (p.feat_dim < 1 || p.hidden < 1 || p.out_dim < 1) {
    throw IoError("bad dimensions in model header of " + path);
  }
  p.values.resize(p.size());
  in.read(reinterpret_cast<char*>(p.values.data()),
          static_cast<std::streamsize>(p.values.size() * sizeof(double)));
  if (in.gcount() !=
      static_cast<std::streamsize>(p.values.size() * sizeof(double))) {
    throw IoError("truncated model payload in " + path);
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (double& d : p.values) {
      std::uint64_t u;
      std::memcpy(&u, &d, sizeof(u));
      std::uint64_t s = 0;
      for (int i = 0; i < 8; ++i) s |= ((u >> (8 * i)) & 0xff) << (8 * (7 - i));
      std::memcpy(&d, &s, sizeof(d));
    }
  }
  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw IoError("trailing bytes after model payload in " + path);
  }
  return p;
}

void check_model_shape(const ModelParams& params, const GridConfig& grid,
                       int feat_dim) {
  if (params.out_dim != grid.tensor_length()) {
    throw ConfigError("model out_dim " + std::to_string(params.out_dim) +
                      " does not match grid n=" + std::to_string(grid.n) +
                      " (tensor length " +
                      std::to_string(grid.tensor_length()) + ")");
  }
  if (params.feat_dim != feat_dim) {
    throw ConfigError("model feat_dim " + std::to_string(params.feat_dim) +
                      " does not match feature length " +
                      std::to_string(feat_dim));
  }
}

}  // namespace gridsight
