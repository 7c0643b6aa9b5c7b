#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "gridsight/nms.hpp"
#include "gridsight/rng.hpp"

using namespace gridsight;

namespace {

Detection det(double cx, double cy, double w, double h, int cls, double score) {
  return Detection{BoxCWH{cx, cy, w, h}, cls, score};
}

bool same_output(const std::vector<Detection>& a,
                 const std::vector<Detection>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i].box == b[i].box) || a[i].class_id != b[i].class_id ||
        a[i].score != b[i].score) {
      return false;
    }
  }
  return true;
}

// Instance generator shared with the acceptance run: random boxes plus
// forced containment pairs, exact duplicates, snapped scores and chains.
std::vector<Detection> random_instance(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Detection> dets;
  const int count = rng.uniform_int(1, 20);
  for (int i = 0; i < count; ++i) {
    const double mode = rng.uniform();
    if (mode < 0.25 && !dets.empty()) {
      // enclosing box around an earlier one
      const auto& inner = dets[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(dets.size()) - 1))];
      const double w = inner.box.w * rng.uniform(1.2, 2.0);
      const double h = inner.box.h * rng.uniform(1.2, 2.0);
      dets.push_back(det(inner.box.cx, inner.box.cy, w, h, inner.class_id,
                         rng.uniform(0.0, 1.0)));
    } else if (mode < 0.4 && !dets.empty()) {
      // exact duplicate, possibly same score
      auto copy = dets[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(dets.size()) - 1))];
      if (rng.uniform() < 0.5) copy.score = rng.uniform(0.0, 1.0);
      dets.push_back(copy);
    } else if (mode < 0.55 && !dets.empty()) {
      // chain: shifted copy of the previous box
      auto next = dets.back();
      next.box.cx += next.box.w * rng.uniform(0.02, 0.15);
      next.score = rng.uniform(0.0, 1.0);
      dets.push_back(next);
    } else {
      const double w = rng.uniform(0.05, 0.4);
      const double h = rng.uniform(0.05, 0.4);
      dets.push_back(det(rng.uniform(w / 2, 1 - w / 2),
                         rng.uniform(h / 2, 1 - h / 2), w, h,
                         rng.uniform_int(0, 2), rng.uniform(0.0, 1.0)));
    }
    // snapped scores force ties
    if (rng.uniform() < 0.4) {
      dets.back().score = 0.05 * rng.uniform_int(1, 19);
    }
  }
  return dets;
}

}  // namespace

TEST_CASE("single detection passes through") {
  const std::vector<Detection> in = {det(0.5, 0.5, 0.2, 0.2, 1, 0.8)};
  const auto out = nms_scale_synthesis(in);
  REQUIRE(out.size() == 1);
  CHECK(same_output(in, out));
}

TEST_CASE("identical boxes collapse to the higher score") {
  const std::vector<Detection> in = {det(0.5, 0.5, 0.2, 0.2, 0, 0.9),
                                     det(0.5, 0.5, 0.2, 0.2, 0, 0.8)};
  const auto out = nms_scale_synthesis(in);
  REQUIRE(out.size() == 1);
  CHECK(out[0].score == 0.9);
}

TEST_CASE("containment rescue raises the enclosing box") {
  const auto small = det(0.5, 0.5, 0.2, 0.2, 2, 0.9);
  const auto large = det(0.5, 0.5, 0.3, 0.3, 2, 0.8);
  // overlap 0.04 over union 0.09
  CHECK(iou(small.box, large.box) == doctest::Approx(4.0 / 9.0).epsilon(1e-12));

  // Default threshold 0.7: the pair never interacts.
  const auto untouched = nms_scale_synthesis({small, large});
  REQUIRE(untouched.size() == 2);
  CHECK(untouched[0].score == 0.9);
  CHECK(untouched[1].score == 0.8);

  // Lowered threshold: (0.9 - 0.8) / 0.9 < 0.15 rescues the large box at
  // the unified score.
  NmsConfig cfg;
  cfg.iou_suppress = 0.4;
  const auto out = nms_scale_synthesis({small, large}, cfg);
  REQUIRE(out.size() == 2);
  CHECK(out[0].box == small.box);
  CHECK(out[0].score == 0.9);
  CHECK(out[1].box == large.box);
  CHECK(out[1].score == 0.9);
}

TEST_CASE("outside the margin the enclosing box is deleted") {
  const auto small = det(0.5, 0.5, 0.2, 0.2, 2, 0.9);
  const auto large = det(0.5, 0.5, 0.3, 0.3, 2, 0.5);
  NmsConfig cfg;
  cfg.iou_suppress = 0.4;
  const auto out = nms_scale_synthesis({small, large}, cfg);
  REQUIRE(out.size() == 1);
  CHECK(out[0].score == 0.9);
}

TEST_CASE("lambda zero degenerates to classic greedy suppression") {
  NmsConfig cfg;
  cfg.iou_suppress = 0.4;
  cfg.lambda_containment = 0.0;
  const auto small = det(0.5, 0.5, 0.2, 0.2, 2, 0.9);
  const auto large = det(0.5, 0.5, 0.3, 0.3, 2, 0.9);
  const auto out = nms_scale_synthesis({small, large}, cfg);
  REQUIRE(out.size() == 1);
}

TEST_CASE("one box per class survives untouched") {
  std::vector<Detection> in;
  for (int c = 0; c < 6; ++c) {
    in.push_back(det(0.5, 0.5, 0.2, 0.2, c, 0.5 + 0.05 * c));
  }
  const auto out = nms_scale_synthesis(in);
  CHECK(out.size() == 6);
}

TEST_CASE("empty input gives empty output") {
  CHECK(nms_scale_synthesis({}).empty());
  CHECK(nms_reference_oracle({}).empty());
}

TEST_CASE("scores never drop and boxes never change") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto in = random_instance(seed);
    const auto out = nms_scale_synthesis(in);
    for (const auto& o : out) {
      bool found = false;
      for (const auto& i : in) {
        if (o.box == i.box && o.class_id == i.class_id &&
            o.score >= i.score) {
          found = true;
          break;
        }
      }
      CHECK(found);
    }
  }
}

TEST_CASE("suppression is idempotent") {
  for (std::uint64_t seed = 100; seed < 150; ++seed) {
    const auto once = nms_scale_synthesis(random_instance(seed));
    const auto twice = nms_scale_synthesis(once);
    CHECK(same_output(once, twice));
  }
}

TEST_CASE("fast path equals the reference oracle") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto in = random_instance(seed);
    const auto fast = nms_scale_synthesis(in);
    const auto slow = nms_reference_oracle(in);
    REQUIRE_MESSAGE(same_output(fast, slow), "instance seed ", seed);
  }
}

TEST_CASE("competitive filter keeps the fitter of a clashing pair") {
  const std::vector<ScoredBox> slots = {
      {BoxCWH{0.5, 0.5, 0.2, 0.2}, 0.9},
      {BoxCWH{0.51, 0.5, 0.2, 0.2}, 0.5},
  };
  REQUIRE(iou(slots[0].box, slots[1].box) > 0.7);
  CHECK(competitive_filter(slots) == std::vector<std::size_t>{0});
}

TEST_CASE("competitive filter keeps everything under the threshold") {
  const std::vector<ScoredBox> slots = {
      {BoxCWH{0.2, 0.2, 0.1, 0.1}, 0.1},
      {BoxCWH{0.5, 0.5, 0.1, 0.1}, 0.9},
      {BoxCWH{0.8, 0.8, 0.1, 0.1}, 0.4},
  };
  CHECK(competitive_filter(slots) == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("competitive filter chain drops only the middle") {
  // A overlaps B, B overlaps C, A and C stay apart; fitness A > B > C.
  const double w = 0.21;
  const double d = w / 7.0; // pairwise overlap 0.75
  const std::vector<ScoredBox> slots = {
      {BoxCWH{0.5, 0.5, w, w}, 0.9},
      {BoxCWH{0.5 + d, 0.5, w, w}, 0.6},
      {BoxCWH{0.5 + 2 * d, 0.5, w, w}, 0.3},
  };
  REQUIRE(iou(slots[0].box, slots[1].box) > 0.7);
  REQUIRE(iou(slots[1].box, slots[2].box) > 0.7);
  REQUIRE(iou(slots[0].box, slots[2].box) <= 0.7);
  CHECK(competitive_filter(slots) == std::vector<std::size_t>{0, 2});

  // Exhaustive check of the greedy definition: a slot survives iff no
  // fitter survivor overlaps it.
  const auto survivors = competitive_filter(slots);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    bool blocked = false;
    for (std::size_t s : survivors) {
      if (slots[s].fitness > slots[i].fitness &&
          iou(slots[s].box, slots[i].box) > 0.7) {
        blocked = true;
      }
    }
    const bool survived =
        std::find(survivors.begin(), survivors.end(), i) != survivors.end();
    CHECK(survived == !blocked);
  }
}
