#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gridsight/gridcodec.hpp"

namespace gridsight {

struct ClassShape {
  double w = 0.1;
  double h = 0.1;
  double jitter = 0.2; // relative, applied independently per axis
};

// Mean shapes track the six anchor aspect ratios; car keeps w/h = 2.
inline constexpr std::array<ClassShape, kClasses> kDefaultShapes = {{
    {0.12, 0.24, 0.1}, // person, 1:2
    {0.14, 0.14, 0.1}, // bicycle, 1:1
    {0.18, 0.18, 0.1}, // motorcycle, 2:2
    {0.26, 0.13, 0.1}, // car, 2:1
    {0.34, 0.17, 0.1}, // truck, 4:2
    {0.18, 0.36, 0.1}, // bus, 2:4
}};

struct SceneSpec {
  int objects_min = 1;
  int objects_max = 3;
  std::array<ClassShape, kClasses> class_shape_table = kDefaultShapes;
  double occlusion_rate = 0.2;
  int feature_resolution = 36;
  int grid_n = 9; // one GT center per cell of this grid
  // Centers sit at a free cell's center plus uniform jitter (in cell units),
  // so local appearances recur across scenes while offsets stay informative.
  double center_jitter_cells = 0.15;
};

struct LabeledScene {
  int id = 0;
  std::vector<double> features; // feature_resolution^2, row-major, in [0,1]
  std::vector<GroundTruth> gts;
};

// Deterministic for a fixed (spec, count, seed); scenes derive independent
// streams from the seed and their index. When a scene gets an occlusion
// pair, the first box is drawn oversized and the second nested inside it.
std::vector<LabeledScene> generate_dataset(const SceneSpec& spec, int count,
                                           std::uint64_t seed);

// Line-delimited records:
// {"id":..., "gts":[{"cx":...,"cy":...,"w":...,"h":...,"class":...}], "features":[...]}
// Numbers carry 17 significant digits, so read(write(x)) == x field-exact.
void write_annotations(const std::vector<LabeledScene>& scenes,
                       const std::string& path);
std::vector<LabeledScene> read_annotations(const std::string& path);

}  // namespace gridsight
