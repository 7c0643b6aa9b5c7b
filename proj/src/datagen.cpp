#include "gridsight/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "gridsight/errors.hpp"
#include "gridsight/rng.hpp"

namespace gridsight {

namespace {

constexpr int kMaxRetries = 1000;
constexpr double kSizeCap = 0.72;
// The outer box of an occlusion pair spans at least this much along its
// longer axis, so a neighbouring cell center (plus jitter) fits inside for
// the nested box.
constexpr double kOuterSpanLo = 0.54;
constexpr double kOuterSpanHi = 0.62;

int cell_of(const BoxCWH& box, int n) {
  const int row = std::clamp(static_cast<int>(std::floor(box.cy * n)), 0, n - 1);
  const int col = std::clamp(static_cast<int>(std::floor(box.cx * n)), 0, n - 1);
  return row * n + col;
}

void render_box(std::vector<double>& features, int f, const BoxCWH& box,
                int class_id) {
  const double weight = (class_id + 1) / static_cast<double>(kClasses);
  const int x0 = std::max(0, static_cast<int>(std::floor(box.left() * f)));
  const int x1 = std::min(f - 1, static_cast<int>(std::floor(box.right() * f)));
  const int y0 = std::max(0, static_cast<int>(std::floor(box.top() * f)));
  const int y1 = std::min(f - 1, static_cast<int>(std::floor(box.bottom() * f)));
  for (int y = y0; y <= y1; ++y) {
    const double py0 = static_cast<double>(y) / f;
    const double py1 = static_cast<double>(y + 1) / f;
    const double oy = std::min(py1, box.bottom()) - std::max(py0, box.top());
    if (oy <= 0.0) continue;
    for (int x = x0; x <= x1; ++x) {
      const double px0 = static_cast<double>(x) / f;
      const double px1 = static_cast<double>(x + 1) / f;
      const double ox = std::min(px1, box.right()) - std::max(px0, box.left());
      if (ox <= 0.0) continue;
      // Coverage fraction of the feature pixel, class-coded.
      features[static_cast<std::size_t>(y) * f + x] += ox * oy * f * f * weight;
    }
  }
}

// Cells whose jittered center keeps a (w, h) box fully inside the canvas
// and, when bounds are given, inside the enclosing box.
std::vector<int> feasible_cells(const SceneSpec& spec, double w, double h,
                                const std::set<int>& used_cells,
                                const BoxCWH* bounds) {
  const int n = spec.grid_n;
  const double jitter = spec.center_jitter_cells;
  double x_lo = w / 2.0, x_hi = 1.0 - w / 2.0;
  double y_lo = h / 2.0, y_hi = 1.0 - h / 2.0;
  if (bounds != nullptr) {
    x_lo = std::max(x_lo, bounds->left() + w / 2.0);
    x_hi = std::min(x_hi, bounds->right() - w / 2.0);
    y_lo = std::max(y_lo, bounds->top() + h / 2.0);
    y_hi = std::min(y_hi, bounds->bottom() - h / 2.0);
  }
  std::vector<int> cells;
  for (int row = 0; row < n; ++row) {
    const double cy_lo = (row + 0.5 - jitter) / n;
    const double cy_hi = (row + 0.5 + jitter) / n;
    if (cy_lo < y_lo || cy_hi > y_hi) continue;
    for (int col = 0; col < n; ++col) {
      const double cx_lo = (col + 0.5 - jitter) / n;
      const double cx_hi = (col + 0.5 + jitter) / n;
      if (cx_lo < x_lo || cx_hi > x_hi) continue;
      const int cell = row * n + col;
      if (!used_cells.count(cell)) cells.push_back(cell);
    }
  }
  return cells;
}

GroundTruth place_box(Rng& rng, const SceneSpec& spec, double w, double h,
                      int cls, std::set<int>& used_cells, const BoxCWH* bounds,
                      bool& placed) {
  const auto cells = feasible_cells(spec, w, h, used_cells, bounds);
  if (cells.empty()) {
    placed = false;
    return {};
  }
  const int cell =
      cells[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(cells.size()) - 1))];
  const int row = cell / spec.grid_n;
  const int col = cell % spec.grid_n;
  const double jitter = spec.center_jitter_cells;
  const double cx = (col + 0.5 + rng.uniform(-jitter, jitter)) / spec.grid_n;
  const double cy = (row + 0.5 + rng.uniform(-jitter, jitter)) / spec.grid_n;
  used_cells.insert(cell);
  placed = true;
  return GroundTruth{BoxCWH{cx, cy, w, h}, cls};
}

GroundTruth draw_free_box(Rng& rng, const SceneSpec& spec,
                          std::set<int>& used_cells, int scene_id) {
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    const int cls = rng.uniform_int(0, kClasses - 1);
    const auto& shape = spec.class_shape_table[cls];
    double w = shape.w * rng.uniform(1.0 - shape.jitter, 1.0 + shape.jitter);
    double h = shape.h * rng.uniform(1.0 - shape.jitter, 1.0 + shape.jitter);
    w = std::min(w, kSizeCap);
    h = std::min(h, kSizeCap);
    bool placed = false;
    const auto gt = place_box(rng, spec, w, h, cls, used_cells, nullptr, placed);
    if (placed) return gt;
  }
  throw DataError("generate_dataset: scene " + std::to_string(scene_id) +
                  " unsatisfiable after " + std::to_string(kMaxRetries) +
                  " retries");
}

GroundTruth draw_outer_box(Rng& rng, const SceneSpec& spec,
                           std::set<int>& used_cells, int scene_id) {
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    const int cls = rng.uniform_int(0, kClasses - 1);
    const auto& shape = spec.class_shape_table[cls];
    const double span = rng.uniform(kOuterSpanLo, kOuterSpanHi);
    double w, h;
    if (shape.w >= shape.h) {
      w = span;
      h = span * shape.h / shape.w;
    } else {
      h = span;
      w = span * shape.w / shape.h;
    }
    bool placed = false;
    const auto gt = place_box(rng, spec, w, h, cls, used_cells, nullptr, placed);
    if (placed) return gt;
  }
  throw DataError("generate_dataset: scene " + std::to_string(scene_id) +
                  " unsatisfiable after " + std::to_string(kMaxRetries) +
                  " retries (outer box)");
}

GroundTruth draw_nested_box(Rng& rng, const SceneSpec& spec,
                            const BoxCWH& outer, std::set<int>& used_cells,
                            int scene_id) {
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    const int cls = rng.uniform_int(0, kClasses - 1);
    const double w = outer.w * rng.uniform(0.3, 0.45);
    const double h = outer.h * rng.uniform(0.3, 0.45);
    bool placed = false;
    const auto gt = place_box(rng, spec, w, h, cls, used_cells, &outer, placed);
    if (placed) return gt;
  }
  throw DataError("generate_dataset: scene " + std::to_string(scene_id) +
                  " unsatisfiable after " + std::to_string(kMaxRetries) +
                  " retries (nested box)");
}

}  // namespace

std::vector<LabeledScene> generate_dataset(const SceneSpec& spec, int count,
                                           std::uint64_t seed) {
  if (count < 1) throw ConfigError("generate_dataset: count must be >= 1");
  if (spec.objects_min < 1 || spec.objects_max < spec.objects_min) {
    throw ConfigError("generate_dataset: bad objects_per_scene range");
  }
  if (spec.feature_resolution < 1 || spec.grid_n < 1) {
    throw ConfigError("generate_dataset: bad resolution or grid size");
  }

  std::vector<LabeledScene> scenes;
  scenes.reserve(static_cast<std::size_t>(count));
  for (int id = 0; id < count; ++id) {
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(id)));
    LabeledScene scene;
    scene.id = id;

    const int n_objects = rng.uniform_int(spec.objects_min, spec.objects_max);
    const bool nest = n_objects >= 2 && rng.uniform() < spec.occlusion_rate;

    std::set<int> used_cells;
    scene.gts.push_back(nest ? draw_outer_box(rng, spec, used_cells, id)
                             : draw_free_box(rng, spec, used_cells, id));
    for (int k = 1; k < n_objects; ++k) {
      if (k == 1 && nest) {
        scene.gts.push_back(
            draw_nested_box(rng, spec, scene.gts[0].box, used_cells, id));
      } else {
        scene.gts.push_back(draw_free_box(rng, spec, used_cells, id));
      }
    }

    const int f = spec.feature_resolution;
    scene.features.assign(static_cast<std::size_t>(f) * f, 0.0);
    for (const auto& gt : scene.gts) {
      render_box(scene.features, f, gt.box, gt.class_id);
    }
    for (double& v : scene.features) v = std::clamp(v, 0.0, 1.0);
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_annotations(const std::vector<LabeledScene>& scenes,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& scene : scenes) {
    out << "{\"id\":" << scene.id << ",\"gts\":[";
    for (std::size_t g = 0; g < scene.gts.size(); ++g) {
      const auto& gt = scene.gts[g];
      if (g) out << ',';
      out << "{\"cx\":" << fmt17(gt.box.cx) << ",\"cy\":" << fmt17(gt.box.cy)
          << ",\"w\":" << fmt17(gt.box.w) << ",\"h\":" << fmt17(gt.box.h)
          << ",\"class\":" << gt.class_id << '}';
    }
    out << "],\"features\":[";
    for (std::size_t i = 0; i < scene.features.size(); ++i) {
      if (i) out << ',';
      out << fmt17(scene.features[i]);
    }
    out << "]}\n";
  }
  if (!out) throw IoError("write failed for " + path);
}

std::vector<LabeledScene> read_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<LabeledScene> scenes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("annotations line " + std::to_string(lineno) + ": " +
                      e.what());
    }
    try {
      LabeledScene scene;
      scene.id = j.at("id").get<int>();
      for (const auto& g : j.at("gts")) {
        GroundTruth gt;
        gt.box = BoxCWH{g.at("cx").get<double>(), g.at("cy").get<double>(),
                        g.at("w").get<double>(), g.at("h").get<double>()};
        gt.class_id = g.at("class").get<int>();
        if (gt.class_id < 0 || gt.class_id >= kClasses) {
          throw DataError("annotations line " + std::to_string(lineno) +
                          ": class id " + std::to_string(gt.class_id) +
                          " out of range");
        }
        if (!(gt.box.w > 0.0 && gt.box.h > 0.0)) {
          throw DataError("annotations line " + std::to_string(lineno) +
                          ": non-positive box extent");
        }
        scene.gts.push_back(gt);
      }
      scene.features = j.at("features").get<std::vector<double>>();
      scenes.push_back(std::move(scene));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("annotations line " + std::to_string(lineno) + ": " +
                      e.what());
    }
  }
  return scenes;
}

}  // namespace gridsight
