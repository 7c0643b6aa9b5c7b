#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "gridsight/datagen.hpp"
#include "gridsight/errors.hpp"

using namespace gridsight;

namespace {

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

bool scenes_equal(const std::vector<LabeledScene>& a,
                  const std::vector<LabeledScene>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id || a[i].features != b[i].features ||
        a[i].gts.size() != b[i].gts.size()) {
      return false;
    }
    for (std::size_t g = 0; g < a[i].gts.size(); ++g) {
      if (!(a[i].gts[g].box == b[i].gts[g].box) ||
          a[i].gts[g].class_id != b[i].gts[g].class_id) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

TEST_CASE("generation is deterministic for a fixed seed") {
  const SceneSpec spec;
  const auto a = generate_dataset(spec, 50, 42);
  const auto b = generate_dataset(spec, 50, 42);
  CHECK(scenes_equal(a, b));
  const auto c = generate_dataset(spec, 50, 43);
  CHECK_FALSE(scenes_equal(a, c));
}

TEST_CASE("forced occlusion nests the second box in the first") {
  SceneSpec spec;
  spec.objects_min = 2;
  spec.objects_max = 2;
  spec.occlusion_rate = 1.0;
  const auto scenes = generate_dataset(spec, 100, 7);
  for (const auto& scene : scenes) {
    REQUIRE(scene.gts.size() == 2);
    CHECK(contains(scene.gts[0].box, scene.gts[1].box));
  }
}

TEST_CASE("car boxes keep a 2:1 mean aspect") {
  const SceneSpec spec;
  const auto scenes = generate_dataset(spec, 1000, 123);
  double sum = 0.0;
  int count = 0;
  for (const auto& scene : scenes) {
    for (const auto& gt : scene.gts) {
      if (gt.class_id == 3) {
        sum += gt.box.w / gt.box.h;
        ++count;
      }
    }
  }
  REQUIRE(count > 100);
  CHECK(std::abs(sum / count - 2.0) <= 0.3);
}

TEST_CASE("every scene keeps one center per grid cell and boxes inside") {
  const SceneSpec spec;
  const auto scenes = generate_dataset(spec, 200, 9);
  const GridConfig grid(spec.grid_n);
  for (const auto& scene : scenes) {
    std::set<int> cells;
    for (const auto& gt : scene.gts) {
      CHECK(gt.box.left() >= 0.0);
      CHECK(gt.box.right() <= 1.0);
      CHECK(gt.box.top() >= 0.0);
      CHECK(gt.box.bottom() <= 1.0);
      const int row = static_cast<int>(gt.box.cy * grid.n);
      const int col = static_cast<int>(gt.box.cx * grid.n);
      cells.insert(row * grid.n + col);
    }
    CHECK(cells.size() == scene.gts.size());
    // encode accepts every generated scene without drops
    const auto enc = encode(scene.gts, grid);
    CHECK(enc.dropped.empty());
  }
}

TEST_CASE("features stay in range and light up under boxes") {
  const SceneSpec spec;
  const auto scenes = generate_dataset(spec, 20, 11);
  for (const auto& scene : scenes) {
    REQUIRE(scene.features.size() ==
            static_cast<std::size_t>(spec.feature_resolution) *
                spec.feature_resolution);
    double total = 0.0;
    for (double v : scene.features) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      total += v;
    }
    CHECK(total > 0.0);
    // The center pixel of the first box is covered.
    const auto& box = scene.gts[0].box;
    const int f = spec.feature_resolution;
    const int px = std::min(f - 1, static_cast<int>(box.cx * f));
    const int py = std::min(f - 1, static_cast<int>(box.cy * f));
    CHECK(scene.features[static_cast<std::size_t>(py) * f + px] > 0.0);
  }
}

TEST_CASE("annotations round-trip field-exactly") {
  const SceneSpec spec;
  auto scenes = generate_dataset(spec, 100, 21);
  // A background-only record is valid too.
  LabeledScene empty;
  empty.id = 100;
  empty.features.assign(
      static_cast<std::size_t>(spec.feature_resolution) *
          spec.feature_resolution,
      0.0);
  scenes.push_back(empty);

  const auto path = temp_file("gridsight_annotations_test.jsonl");
  write_annotations(scenes, path.string());
  const auto back = read_annotations(path.string());
  CHECK(scenes_equal(scenes, back));
  std::filesystem::remove(path);
}

TEST_CASE("bad class ids are rejected with the line number") {
  const auto path = temp_file("gridsight_annotations_bad.jsonl");
  {
    std::ofstream out(path);
    out << R"({"id":0,"gts":[],"features":[0.0]})" << "\n";
    out << R"({"id":1,"gts":[{"cx":0.5,"cy":0.5,"w":0.1,"h":0.1,"class":7}],"features":[0.0]})"
        << "\n";
  }
  CHECK_THROWS_WITH_AS(read_annotations(path.string()),
                       doctest::Contains("line 2"), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("malformed lines are rejected with the line number") {
  const auto path = temp_file("gridsight_annotations_malformed.jsonl");
  {
    std::ofstream out(path);
    out << R"({"id":0,"gts":[],"features":[0.0]})" << "\n";
    out << "{{{\n";
  }
  CHECK_THROWS_WITH_AS(read_annotations(path.string()),
                       doctest::Contains("line 2"), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("impossible specs fail after bounded retries") {
  SceneSpec spec;
  spec.grid_n = 1; // a single cell cannot host two centers
  spec.objects_min = 2;
  spec.objects_max = 2;
  spec.occlusion_rate = 0.0;
  CHECK_THROWS_AS(generate_dataset(spec, 1, 3), DataError);
}
