#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gridsight/errors.hpp"
#include "gridsight/gridcodec.hpp"
#include "gridsight/rng.hpp"

using namespace gridsight;

namespace {

// Independent overlap ratio in corner form, for the anchor-choice oracle.
double corner_iou(double l1, double t1, double r1, double b1, double l2,
                  double t2, double r2, double b2) {
  const double iw = std::min(r1, r2) - std::max(l1, l2);
  const double ih = std::min(b1, b2) - std::max(t1, t2);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / ((r1 - l1) * (b1 - t1) + (r2 - l2) * (b2 - t2) - inter);
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("tensor lengths match the parameter counts") {
  CHECK(GridConfig(9).tensor_length() == 2916);
  CHECK(GridConfig(11).tensor_length() == 4356);
  CHECK(GridConfig(13).tensor_length() == 6084);
  CHECK(GridConfig(9).slots() == 486);
}

TEST_CASE("image-center ground truth maps to the central cell") {
  const GridConfig cfg(9);
  const GroundTruth gt{BoxCWH{0.5, 0.5, 0.2, 0.1}, 3};
  const auto res = encode({{gt}}, cfg);
  const auto objects = res.assignment.object_slots();
  REQUIRE(objects.size() == 1);
  const int cell = static_cast<int>(objects[0]) / kAnchorsPerCell;
  CHECK(cell / 9 == 4);
  CHECK(cell % 9 == 4);
}

TEST_CASE("object anchor is the best-overlap prior") {
  const GridConfig cfg(9);
  // 2:1 box sized near the small trio.
  const GroundTruth gt{BoxCWH{0.5, 0.5, 0.3, 0.15}, 3};
  const auto res = encode({{gt}}, cfg);
  const auto objects = res.assignment.object_slots();
  REQUIRE(objects.size() == 1);
  const int anchor = static_cast<int>(objects[0]) % kAnchorsPerCell;

  // Brute-force oracle over the six centered priors, corner arithmetic.
  const double cx = 4.5 / 9.0, cy = 4.5 / 9.0;
  int best = -1;
  double best_r = -1.0;
  for (int a = 0; a < 6; ++a) {
    const double pw = cfg.priors[a].w, ph = cfg.priors[a].h;
    const double r = corner_iou(cx - gt.box.w / 2, cy - gt.box.h / 2,
                                cx + gt.box.w / 2, cy + gt.box.h / 2,
                                cx - pw / 2, cy - ph / 2, cx + pw / 2,
                                cy + ph / 2);
    if (r > best_r) {
      best_r = r;
      best = a;
    }
  }
  CHECK(best == 2);
  CHECK(anchor == best);
}

TEST_CASE("encode then decode recovers the ground truth") {
  const GridConfig cfg(9);
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<GroundTruth> gts;
    std::vector<std::uint8_t> used(81, 0);
    const int count = rng.uniform_int(1, 4);
    for (int i = 0; i < count; ++i) {
      const double w = rng.uniform(0.05, 0.3);
      const double h = rng.uniform(0.05, 0.3);
      // keep centers at least one cell from the borders
      const double cx = rng.uniform(1.0 / 9 + 0.01, 8.0 / 9 - 0.01);
      const double cy = rng.uniform(1.0 / 9 + 0.01, 8.0 / 9 - 0.01);
      const int cell = static_cast<int>(cy * 9) * 9 + static_cast<int>(cx * 9);
      if (used[cell]) continue;
      used[cell] = 1;
      gts.push_back({BoxCWH{cx, cy, w, h}, rng.uniform_int(0, 5)});
    }
    if (gts.empty()) continue;

    const auto res = encode(gts, cfg);
    CHECK(res.dropped.empty());
    CHECK(res.assignment.object_slots().size() == gts.size());
    const auto dets = decode(res.target, cfg, 0.5);
    REQUIRE(dets.size() == gts.size());
    for (const auto& det : dets) {
      double best = 0.0;
      int best_g = -1;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        const double r = iou(det.box, gts[g].box);
        if (r > best) {
          best = r;
          best_g = static_cast<int>(g);
        }
      }
      REQUIRE(best_g >= 0);
      CHECK(best >= 0.999);
      CHECK(det.class_id == gts[static_cast<std::size_t>(best_g)].class_id);
      CHECK(det.score == 1.0);
    }
  }
}

TEST_CASE("same-cell ground truths keep the largest") {
  const GridConfig cfg(9);
  const std::vector<GroundTruth> gts = {
      {BoxCWH{0.51, 0.5, 0.1, 0.1}, 0},
      {BoxCWH{0.52, 0.51, 0.3, 0.3}, 1},
      {BoxCWH{0.49, 0.49, 0.05, 0.05}, 2},
  };
  const auto res = encode(gts, cfg);
  REQUIRE(res.dropped.size() == 2);
  CHECK(res.dropped[0] == 0);
  CHECK(res.dropped[1] == 2);
  const auto objects = res.assignment.object_slots();
  REQUIRE(objects.size() == 1);
  CHECK(res.assignment.matched_gt[objects[0]] == 1);
}

TEST_CASE("boundary centers clamp into the last cell") {
  const GridConfig cfg(9);
  const auto res = encode({{GroundTruth{BoxCWH{1.0, 1.0, 0.1, 0.1}, 0}}}, cfg);
  const auto objects = res.assignment.object_slots();
  REQUIRE(objects.size() == 1);
  const int cell = static_cast<int>(objects[0]) / kAnchorsPerCell;
  CHECK(cell == 80);
}

TEST_CASE("out-of-range centers are rejected by index") {
  const GridConfig cfg(9);
  const std::vector<GroundTruth> gts = {{BoxCWH{0.5, 0.5, 0.1, 0.1}, 0},
                                        {BoxCWH{1.2, 0.5, 0.1, 0.1}, 0}};
  CHECK_THROWS_WITH_AS(encode(gts, cfg), doctest::Contains("annotation 1"),
                       DataError);
}

TEST_CASE("decode composes score as confidence times class probability") {
  const GridConfig cfg(9);
  auto t = make_tensor(cfg);
  const int cell = 40;
  t.values[class_index(cell, 3)] = 0.9;
  t.values[class_index(cell, 0)] = 0.1;
  t.values[coord_index(cell, 2, 0)] = 0.5;
  t.values[coord_index(cell, 2, 1)] = 0.5;
  t.values[coord_index(cell, 2, 2)] = 0.2;
  t.values[coord_index(cell, 2, 3)] = 0.1;
  t.values[conf_index(cell, 2)] = 0.8;
  const auto dets = decode(t, cfg, 0.5);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].score == doctest::Approx(0.72).epsilon(1e-12));
  CHECK(dets[0].class_id == 3);
}

TEST_CASE("zero confidence decodes to nothing") {
  const GridConfig cfg(9);
  auto t = make_tensor(cfg);
  CHECK(decode(t, cfg, 0.05).empty());
  CHECK(decode(t, cfg, 0.9).empty());
}

TEST_CASE("decode orders by score then slot") {
  const GridConfig cfg(9);
  auto t = make_tensor(cfg);
  for (int cell : {50, 10, 30}) {
    t.values[class_index(cell, 1)] = 1.0;
    t.values[coord_index(cell, 0, 2)] = 0.1;
    t.values[coord_index(cell, 0, 3)] = 0.1;
    t.values[conf_index(cell, 0)] = 0.8;
  }
  t.values[conf_index(30, 0)] = 0.9;
  const auto dets = decode(t, cfg, 0.5);
  REQUIRE(dets.size() == 3);
  CHECK(dets[0].score == doctest::Approx(0.9));
  // equal scores fall back to cell order
  CHECK(dets[1].box.cx < dets[2].box.cx);
}

TEST_CASE("decode rejects mismatched tensors") {
  const GridConfig cfg(9);
  auto t = make_tensor(GridConfig(11));
  CHECK_THROWS_AS(decode(t, cfg, 0.5), ConfigError);
}

TEST_CASE("shield mask matches the boundary rule") {
  const GridConfig cfg(9);
  const auto mask = shield_mask(cfg);
  REQUIRE(mask.size() == 486);
  // corner cell: every prior crosses
  for (int a = 0; a < 6; ++a) CHECK(mask[slot_index(0, a)] == 1);
  // central cell: none cross
  for (int a = 0; a < 6; ++a) CHECK(mask[slot_index(40, a)] == 0);
  // cell (1,1): the 3-cell extents touch the border exactly and stay live
  CHECK(mask[slot_index(10, 3)] == 0);
  // but the 6-cell extents cross
  CHECK(mask[slot_index(10, 4)] == 1);

  // Frozen census for n=9: 49 live cells for the four 3-cell-or-smaller
  // priors, 21 for each of the two 6-cell priors.
  int live = 0;
  for (auto m : mask) live += m ? 0 : 1;
  CHECK(live == 49 * 4 + 21 * 2);
}

TEST_CASE("apply_shielding demotes masked slots") {
  const GridConfig cfg(9);
  // A ground truth whose center sits in a border cell.
  const auto res = encode({{GroundTruth{BoxCWH{0.05, 0.5, 0.08, 0.08}, 0}}}, cfg);
  auto assignment = res.assignment;
  const auto objects = assignment.object_slots();
  REQUIRE(objects.size() == 1);
  apply_shielding(assignment, shield_mask(cfg));
  CHECK(assignment.labels[objects[0]] == SlotLabel::Shielded);
  CHECK(assignment.matched_gt[objects[0]] == -1);
  CHECK(assignment.object_slots().empty());
}

TEST_CASE("interior objects stay unshielded") {
  const GridConfig cfg(9);
  const auto res = encode({{GroundTruth{BoxCWH{0.5, 0.5, 0.2, 0.1}, 3}}}, cfg);
  auto assignment = res.assignment;
  apply_shielding(assignment, shield_mask(cfg));
  CHECK(assignment.object_slots().size() == 1);
}

TEST_CASE("tensor files round-trip bit-exactly") {
  const GridConfig cfg(9);
  auto t = make_tensor(cfg);
  Rng rng(1);
  for (auto& v : t.values) v = rng.uniform();
  const auto path = temp_file("gridsight_tensor_test.bin");
  write_tensor(t, path.string());
  const auto back = read_tensor(path.string());
  CHECK(back.n == t.n);
  CHECK(back.values == t.values);
  std::filesystem::remove(path);
}

TEST_CASE("tensor reader rejects bad files") {
  const auto path = temp_file("gridsight_tensor_bad.bin");
  {
    std::ofstream out(path, std::ios::binary);
    out << "gridsight-tensor v1 n=9\n";
    out << "short";
  }
  CHECK_THROWS_AS(read_tensor(path.string()), IoError);
  {
    std::ofstream out(path, std::ios::binary);
    out << "not-a-tensor\n";
  }
  CHECK_THROWS_AS(read_tensor(path.string()), IoError);
  std::filesystem::remove(path);
}
