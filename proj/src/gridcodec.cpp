#include "gridsight/gridcodec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "gridsight/errors.hpp"

namespace gridsight {

PredictionTensor make_tensor(const GridConfig& cfg) {
  PredictionTensor t;
  t.n = cfg.n;
  t.values.assign(static_cast<std::size_t>(cfg.tensor_length()), 0.0);
  return t;
}

std::vector<std::size_t> AnchorAssignment::object_slots() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == SlotLabel::Object) out.push_back(i);
  }
  return out;
}

namespace {

int clamped_cell_coord(double v, int n) {
  const int c = static_cast<int>(std::floor(v * n));
  return std::clamp(c, 0, n - 1);
}

int best_anchor(const GroundTruth& gt, const GridConfig& cfg, int row,
                int col) {
  const double cx = (col + 0.5) / cfg.n;
  const double cy = (row + 0.5) / cfg.n;
  const BoxCWH centered{cx, cy, gt.box.w, gt.box.h};
  int best = 0;
  double best_iou = -1.0;
  for (int a = 0; a < kAnchorsPerCell; ++a) {
    const BoxCWH prior{cx, cy, cfg.priors[a].w, cfg.priors[a].h};
    const double r = iou(centered, prior, IouVariant::Union);
    if (r > best_iou) {
      best_iou = r;
      best = a;
    }
  }
  return best;
}

}  // namespace

EncodeResult encode(std::span<const GroundTruth> gts, const GridConfig& cfg) {
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto& b = gts[i].box;
    if (!(b.cx >= 0.0 && b.cx <= 1.0 && b.cy >= 0.0 && b.cy <= 1.0)) {
      throw DataError("encode: annotation " + std::to_string(i) +
                      " has center outside [0,1]^2");
    }
    if (!(b.w > 0.0 && b.h > 0.0)) {
      throw DataError("encode: annotation " + std::to_string(i) +
                      " has non-positive extent");
    }
    if (gts[i].class_id < 0 || gts[i].class_id >= kClasses) {
      throw DataError("encode: annotation " + std::to_string(i) +
                      " has class id out of range");
    }
  }

  EncodeResult res;
  res.target = make_tensor(cfg);
  res.assignment.n = cfg.n;
  res.assignment.labels.assign(cfg.slots(), SlotLabel::Noobject);
  res.assignment.matched_gt.assign(cfg.slots(), -1);

  // One object per cell: keep the largest-area GT, first wins on ties.
  std::unordered_map<int, std::size_t> chosen;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const int row = clamped_cell_coord(gts[i].box.cy, cfg.n);
    const int col = clamped_cell_coord(gts[i].box.cx, cfg.n);
    const int cell = row * cfg.n + col;
    auto it = chosen.find(cell);
    if (it == chosen.end()) {
      chosen.emplace(cell, i);
    } else if (gts[i].box.area() > gts[it->second].box.area()) {
      res.dropped.push_back(it->second);
      it->second = i;
    } else {
      res.dropped.push_back(i);
    }
  }
  std::sort(res.dropped.begin(), res.dropped.end());

  auto& v = res.target.values;
  // Neutral defaults: uniform class rows, priors as placeholder boxes.
  for (int cell = 0; cell < cfg.cells(); ++cell) {
    for (int c = 0; c < kClasses; ++c) {
      v[class_index(cell, c)] = 1.0 / kClasses;
    }
    for (int a = 0; a < kAnchorsPerCell; ++a) {
      v[coord_index(cell, a, 0)] = 0.5;
      v[coord_index(cell, a, 1)] = 0.5;
      v[coord_index(cell, a, 2)] = std::min(cfg.priors[a].w, 1.0);
      v[coord_index(cell, a, 3)] = std::min(cfg.priors[a].h, 1.0);
    }
  }

  for (const auto& [cell, gi] : chosen) {
    const auto& gt = gts[gi];
    const int row = cell / cfg.n;
    const int col = cell % cfg.n;
    const int anchor = best_anchor(gt, cfg, row, col);

    for (int c = 0; c < kClasses; ++c) {
      v[class_index(cell, c)] = (c == gt.class_id) ? 1.0 : 0.0;
    }
    v[coord_index(cell, anchor, 0)] = gt.box.cx * cfg.n - col;
    v[coord_index(cell, anchor, 1)] = gt.box.cy * cfg.n - row;
    v[coord_index(cell, anchor, 2)] = gt.box.w;
    v[coord_index(cell, anchor, 3)] = gt.box.h;
    v[conf_index(cell, anchor)] = 1.0;

    const int slot = slot_index(cell, anchor);
    res.assignment.labels[slot] = SlotLabel::Object;
    res.assignment.matched_gt[slot] = static_cast<std::int32_t>(gi);
  }
  return res;
}

std::vector<Detection> decode(const PredictionTensor& pred,
                              const GridConfig& cfg, double conf_threshold) {
  if (pred.n != cfg.n ||
      pred.values.size() != static_cast<std::size_t>(cfg.tensor_length())) {
    throw ConfigError("decode: tensor length " +
                      std::to_string(pred.values.size()) +
                      " does not match grid n=" + std::to_string(cfg.n) +
                      " (expected " + std::to_string(cfg.tensor_length()) +
                      ")");
  }
  std::vector<Detection> dets;
  for (int cell = 0; cell < cfg.cells(); ++cell) {
    int cls = 0;
    for (int c = 1; c < kClasses; ++c) {
      if (pred.values[class_index(cell, c)] > pred.values[class_index(cell, cls)])
        cls = c;
    }
    const double p_cls = pred.values[class_index(cell, cls)];
    for (int a = 0; a < kAnchorsPerCell; ++a) {
      const double score = pred.values[conf_index(cell, a)] * p_cls;
      if (score > conf_threshold) {
        dets.push_back(Detection{pred.slot_box(cell, a), cls, score});
      }
    }
  }
  // Slot enumeration is (cell, anchor)-ordered, so a stable sort keeps that
  // as the tie-break.
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.score > b.score;
                   });
  return dets;
}

std::vector<std::uint8_t> shield_mask(const GridConfig& cfg) {
  std::vector<std::uint8_t> mask(cfg.slots(), 0);
  // Cell-unit arithmetic is exact for the 1.5/3/6 extents, so boundary
  // touches never shield.
  for (int row = 0; row < cfg.n; ++row) {
    for (int col = 0; col < cfg.n; ++col) {
      const int cell = row * cfg.n + col;
      for (int a = 0; a < kAnchorsPerCell; ++a) {
        const double hw = kPriorCellsW[a] / 2.0;
        const double hh = kPriorCellsH[a] / 2.0;
        const bool out = (col + 0.5 - hw < 0.0) || (col + 0.5 + hw > cfg.n) ||
                         (row + 0.5 - hh < 0.0) || (row + 0.5 + hh > cfg.n);
        if (out) mask[slot_index(cell, a)] = 1;
      }
    }
  }
  return mask;
}

void apply_shielding(AnchorAssignment& assignment,
                     std::span<const std::uint8_t> mask) {
  if (mask.size() != assignment.labels.size()) {
    throw ConfigError("apply_shielding: mask size " +
                      std::to_string(mask.size()) + " != slot count " +
                      std::to_string(assignment.labels.size()));
  }
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    assignment.labels[i] = SlotLabel::Shielded;
    assignment.matched_gt[i] = -1;
  }
}

namespace {

constexpr std::string_view kTensorMagic = "gridsight-tensor v1 n=";

void write_doubles_le(std::ofstream& out, std::span<const double> vals) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(vals.data()),
              static_cast<std::streamsize>(vals.size() * sizeof(double)));
  } else {
    for (double d : vals) {
      std::uint64_t u;
      std::memcpy(&u, &d, sizeof(u));
      char b[8];
      for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(u >> (8 * i));
      out.write(b, 8);
    }
  }
}

void read_doubles_le(std::ifstream& in, std::span<double> vals,
                     const std::string& path) {
  in.read(reinterpret_cast<char*>(vals.data()),
          static_cast<std::streamsize>(vals.size() * sizeof(double)));
  if (in.gcount() !=
      static_cast<std::streamsize>(vals.size() * sizeof(double))) {
    throw IoError("truncated payload in " + path);
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (double& d : vals) {
      std::uint64_t u;
      std::memcpy(&u, &d, sizeof(u));
      std::uint64_t s = 0;
      for (int i = 0; i < 8; ++i) s |= ((u >> (8 * i)) & 0xff) << (8 * (7 - i));
      std::memcpy(&d, &s, sizeof(d));
    }
  }
}

}  // namespace

void write_tensor(const PredictionTensor& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << kTensorMagic << t.n << '\n';
  write_doubles_le(out, t.values);
  if (!out) throw IoError("write failed for " + path);
}

PredictionTensor read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string header;
  if (!std::getline(in, header) || !header.starts_with(kTensorMagic)) {
    throw IoError("bad tensor header in " + path +
                  " (expected 'gridsight-tensor v1')");
  }
  int n = 0;
  try {
    n = std::stoi(header.substr(kTensorMagic.size()));
  } catch (const std::exception&) {
    throw IoError("bad grid size in tensor header of " + path);
  }
  if (n < 1) throw IoError("bad grid size in tensor header of " + path);

  PredictionTensor t;
  t.n = n;
  t.values.resize(static_cast<std::size_t>(n) * n * kCellStride);
  read_doubles_le(in, t.values, path);
  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw IoError("trailing bytes after tensor payload in " + path);
  }
  return t;
}

}  // namespace gridsight
