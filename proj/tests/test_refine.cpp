#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "tda/pseudo_label_filter.hpp"
#include "tda/random.hpp"

using namespace tda;

namespace {

LabeledBox det_box(double x, double y, ClassId cls, double confidence) {
  return make_box({x, y, 1.0}, 2, 2, 2, 0, cls, confidence, BoxProvenance::detection);
}

// One scene whose cloud holds one point per tau value, all inside a box at 0.
struct TauScene {
  PointCloud cloud;
  PPField field;

  explicit TauScene(const std::vector<double>& taus) {
    cloud.frame = Frame::world;
    for (std::size_t i = 0; i < taus.size(); ++i) {
      cloud.points.push_back({0.1 * static_cast<double>(i % 5) - 0.2, 0.0, 1.0});
      field.tau.push_back(taus[i]);
    }
    field.counts.resize(taus.size());
    field.probabilities.resize(taus.size());
  }
};

}  // namespace

TEST_CASE("nearest-rank percentile") {
  CHECK(percentile_nearest_rank({0.1, 0.4, 0.6, 0.8, 0.9}, 20) == 0.1);
  CHECK(percentile_nearest_rank({0.9, 0.1, 0.6, 0.4, 0.8}, 20) == 0.1);  // unsorted input
  CHECK(percentile_nearest_rank({0.7}, 20) == 0.7);
  std::vector<double> evenly;
  for (int i = 0; i < 100; ++i) evenly.push_back(i / 100.0);
  CHECK(percentile_nearest_rank(evenly, 20) == Catch::Approx(0.19));
  CHECK_THROWS_AS(percentile_nearest_rank({}, 20), ValidationError);
}

TEST_CASE("fbf removes persistent boxes and keeps ephemeral ones") {
  const FilterConfig config;
  SECTION("all points persistent -> removed") {
    TauScene scene(std::vector<double>(10, 0.9));
    SceneDetections dets{"s0", {det_box(0, 0, ClassId::car, 0.8)}};
    auto [kept, records] = fbf_filter(dets, scene.cloud, scene.field, config);
    CHECK(kept.empty());
    REQUIRE(records.size() == 1);
    CHECK(records[0].outcome == FilterOutcome::removed_fbf);
  }
  SECTION("all points ephemeral -> kept") {
    TauScene scene(std::vector<double>(10, 0.1));
    SceneDetections dets{"s0", {det_box(0, 0, ClassId::car, 0.8)}};
    auto [kept, records] = fbf_filter(dets, scene.cloud, scene.field, config);
    REQUIRE(kept.size() == 1);
    CHECK(records[0].outcome == FilterOutcome::kept);
  }
  SECTION("partial overlap: the 20th percentile tolerates persistent majority") {
    TauScene scene({0.1, 0.9, 0.9, 0.9, 0.9});
    SceneDetections dets{"s0", {det_box(0, 0, ClassId::car, 0.8)}};
    auto [kept, records] = fbf_filter(dets, scene.cloud, scene.field, config);
    REQUIRE(kept.size() == 1);  // 20th percentile = 0.1 <= 0.5
  }
  SECTION("empty box -> removed with its own reason") {
    TauScene scene({0.1});
    SceneDetections dets{"s0", {det_box(50, 50, ClassId::car, 0.8)}};
    auto [kept, records] = fbf_filter(dets, scene.cloud, scene.field, config);
    CHECK(kept.empty());
    CHECK(records[0].outcome == FilterOutcome::removed_empty_box);
  }
  SECTION("tau exactly at gamma keeps the box (strict comparison)") {
    TauScene scene(std::vector<double>(10, 0.5));
    SceneDetections dets{"s0", {det_box(0, 0, ClassId::car, 0.8)}};
    auto [kept, records] = fbf_filter(dets, scene.cloud, scene.field, config);
    CHECK(kept.size() == 1);
  }
}

TEST_CASE("fbf is monotone in gamma") {
  Rng rng(11);
  TauScene scene([&] {
    std::vector<double> taus;
    for (int i = 0; i < 40; ++i) taus.push_back(rng.uniform());
    return taus;
  }());
  SceneDetections dets{"s0", {det_box(0, 0, ClassId::car, 0.8)}};
  std::size_t previous_kept = 0;
  for (int g = 0; g <= 10; ++g) {
    FilterConfig config;
    config.gamma_fbf = g / 10.0;
    auto [kept, records] = fbf_filter(dets, scene.cloud, scene.field, config);
    REQUIRE(kept.size() >= previous_kept);  // raising gamma never removes a kept box
    previous_kept = kept.size();
  }
}

TEST_CASE("pof caps from the source statistics") {
  const FilterConfig config;  // defaults: beta=0.333, counts 14357/2207/734, 3712 scenes
  // Independent arithmetic, evaluated here rather than hard-coded blindly.
  const auto oracle = [&](double class_count) {
    return static_cast<std::size_t>(
        std::floor(0.333 * (class_count / 3712.0) * 100.0));
  };
  CHECK(pof_cap(ClassId::car, config, 100) == oracle(14357.0));
  CHECK(pof_cap(ClassId::pedestrian, config, 100) == oracle(2207.0));
  CHECK(pof_cap(ClassId::cyclist, config, 100) == oracle(734.0));
  CHECK(pof_cap(ClassId::car, config, 100) == 128);
  CHECK(pof_cap(ClassId::pedestrian, config, 100) == 19);
  CHECK(pof_cap(ClassId::cyclist, config, 100) == 6);

  FilterConfig zero = config;
  zero.beta = 0.0;
  CHECK(pof_cap(ClassId::car, zero, 100) == 0);
}

TEST_CASE("pof keeps the top-k by confidence") {
  FilterConfig config;
  config.beta = 0.3;
  config.source_class_counts = {10, 10, 10};
  config.source_scene_count = 1;
  // cap = floor(0.3 * 10 * 1) = 3 with one target scene
  std::vector<SceneDetections> scenes(1);
  scenes[0].scene_id = "s0";
  for (int i = 0; i < 10; ++i)
    scenes[0].boxes.push_back(det_box(i * 5.0, 0, ClassId::car, 0.1 * (i + 1)));
  const auto kept = pof_filter(scenes, config, 1);
  REQUIRE(kept[0].boxes.size() == 3);
  std::vector<double> confs;
  for (const auto& b : kept[0].boxes) confs.push_back(b.confidence);
  std::sort(confs.begin(), confs.end());
  CHECK(confs == std::vector<double>{0.8, 0.9, 1.0});
}

TEST_CASE("pof keeps everything under the cap") {
  FilterConfig config;
  config.beta = 1.0;
  config.source_class_counts = {100, 100, 100};
  config.source_scene_count = 1;
  std::vector<SceneDetections> scenes(1);
  scenes[0].scene_id = "s0";
  for (int i = 0; i < 5; ++i)
    scenes[0].boxes.push_back(det_box(i * 5.0, 0, ClassId::car, 0.5));
  const auto kept = pof_filter(scenes, config, 1);
  CHECK(kept[0].boxes.size() == 5);
}

TEST_CASE("pof tie-break prefers the lexicographically smaller scene") {
  FilterConfig config;
  config.beta = 1.0;
  config.source_class_counts = {1, 1, 1};
  config.source_scene_count = 1;  // cap = floor(1*1*1) = 1
  std::vector<SceneDetections> scenes(2);
  scenes[0].scene_id = "s1";
  scenes[1].scene_id = "s0";
  scenes[0].boxes.push_back(det_box(0, 0, ClassId::car, 0.7));
  scenes[1].boxes.push_back(det_box(0, 0, ClassId::car, 0.7));
  const auto kept = pof_filter(scenes, config, 1);
  CHECK(kept[0].boxes.empty());      // "s1" loses the tie
  CHECK(kept[1].boxes.size() == 1);  // "s0" wins

  // Stable-sort oracle: sort (confidence desc, scene_id asc) and take the cap.
  struct Entry { double conf; std::string scene; };
  std::vector<Entry> entries = {{0.7, "s1"}, {0.7, "s0"}};
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.conf != b.conf) return a.conf > b.conf;
    return a.scene < b.scene;
  });
  CHECK(entries[0].scene == "s0");
}

TEST_CASE("pof matches a full-sort oracle on random inputs") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    FilterConfig config;
    config.beta = 0.5;
    config.source_class_counts = {8, 6, 4};
    config.source_scene_count = 2.0;
    const std::size_t n_scenes = 3;
    std::vector<SceneDetections> scenes(n_scenes);
    struct Ref { double conf; std::size_t scene; std::size_t idx; };
    std::array<std::vector<Ref>, kNumClasses> all;
    for (std::size_t s = 0; s < n_scenes; ++s) {
      scenes[s].scene_id = "scene" + std::to_string(s);
      const std::size_t n = rng.uniform_index(8);
      for (std::size_t b = 0; b < n; ++b) {
        const ClassId cls = class_from_index(static_cast<int>(rng.uniform_index(3)));
        // Coarse confidences force ties.
        const double conf = 0.2 * (1 + static_cast<double>(rng.uniform_index(5)));
        scenes[s].boxes.push_back(det_box(b * 10.0, s * 10.0, cls, conf));
        all[static_cast<int>(cls)].push_back({conf, s, b});
      }
    }
    const auto kept = pof_filter(scenes, config, n_scenes);
    for (int c = 0; c < kNumClasses; ++c) {
      auto oracle = all[c];
      std::sort(oracle.begin(), oracle.end(), [&](const Ref& a, const Ref& b) {
        if (a.conf != b.conf) return a.conf > b.conf;
        if (scenes[a.scene].scene_id != scenes[b.scene].scene_id)
          return scenes[a.scene].scene_id < scenes[b.scene].scene_id;
        return a.idx < b.idx;
      });
      const std::size_t cap = pof_cap(class_from_index(c), config, n_scenes);
      oracle.resize(std::min(cap, oracle.size()));
      std::size_t kept_count = 0;
      for (const auto& scene : kept)
        for (const auto& b : scene.boxes)
          if (static_cast<int>(b.cls) == c) ++kept_count;
      REQUIRE(kept_count == oracle.size());
      // Every oracle winner is present in the kept set.
      for (const auto& want : oracle) {
        bool found = false;
        for (const auto& b : kept[want.scene].boxes)
          if (static_cast<int>(b.cls) == c && b.confidence == want.conf &&
              b.center.x == want.idx * 10.0)
            found = true;
        REQUIRE(found);
      }
    }
  }
}

TEST_CASE("refine composition: FB-F first, then PO-F; report covers every box") {
  // Scene 0: one persistent box, one ephemeral; scene 1: three ephemeral cars.
  TauScene s0({0.9, 0.9, 0.9, 0.1, 0.1, 0.1});
  // First three points sit in box A (persistent), last three in box B.
  s0.cloud.points.clear();
  for (int i = 0; i < 3; ++i) s0.cloud.points.push_back({0.1 * i, 0, 1});
  for (int i = 0; i < 3; ++i) s0.cloud.points.push_back({20 + 0.1 * i, 0, 1});
  TauScene s1({0.1, 0.1, 0.1});
  s1.cloud.points.clear();
  for (int i = 0; i < 3; ++i) s1.cloud.points.push_back({0.1 * i, 0, 1});

  std::vector<SceneDetections> raw(2);
  raw[0].scene_id = "a";
  raw[0].boxes = {det_box(0, 0, ClassId::car, 0.9), det_box(20, 0, ClassId::car, 0.6)};
  raw[1].scene_id = "b";
  raw[1].boxes = {det_box(0, 0, ClassId::car, 0.8)};

  std::vector<SceneRefineContext> contexts = {{&s0.cloud, &s0.field}, {&s1.cloud, &s1.field}};

  FilterConfig config;
  config.beta = 0.5;
  config.source_class_counts = {1, 1, 1};
  config.source_scene_count = 1.0;  // cap = floor(0.5 * 1 * 2) = 1 over 2 scenes

  const RefineResult result = refine_pseudo_labels(raw, contexts, config);
  // FB-F removes the persistent 0.9 box; PO-F keeps only the best survivor (0.8).
  CHECK(result.pseudo_labels[0].boxes.empty());
  REQUIRE(result.pseudo_labels[1].boxes.size() == 1);
  CHECK(result.pseudo_labels[1].boxes[0].confidence == 0.8);
  CHECK(result.pseudo_labels[1].boxes[0].provenance == BoxProvenance::pseudo_label);
  CHECK(result.report.records.size() == 3);  // every input box accounted for
  const auto kept = result.report.kept_per_class();
  const auto removed = result.report.removed_per_class();
  CHECK(kept[0] == 1);
  CHECK(removed[0] == 2);
}

TEST_CASE("refine pass-through modes") {
  TauScene scene({0.1, 0.1, 0.1});
  std::vector<SceneDetections> raw(1);
  raw[0].scene_id = "a";
  raw[0].boxes = {det_box(0, 0, ClassId::car, 0.9), det_box(30, 0, ClassId::pedestrian, 0.3)};
  std::vector<SceneRefineContext> contexts = {{&scene.cloud, &scene.field}};
  FilterConfig config;
  config.beta = 1.0;
  config.source_class_counts = {1000, 1000, 1000};
  config.source_scene_count = 1.0;

  SECTION("both disabled: pseudo-labels equal raw detections") {
    const RefineResult r = refine_pseudo_labels(raw, contexts, config, false, false);
    REQUIRE(r.pseudo_labels[0].boxes.size() == 2);
    CHECK(r.report.records.size() == 2);
  }
  SECTION("composition never keeps more per class than PO-F alone") {
    const RefineResult both = refine_pseudo_labels(raw, contexts, config, true, true);
    const RefineResult pof_only = refine_pseudo_labels(raw, contexts, config, false, true);
    const auto kb = both.report.kept_per_class();
    const auto kp = pof_only.report.kept_per_class();
    for (int c = 0; c < kNumClasses; ++c) CHECK(kb[c] <= kp[c]);
  }
}

TEST_CASE("refinement is deterministic") {
  Rng rng(59);
  TauScene scene([&] {
    std::vector<double> taus;
    for (int i = 0; i < 30; ++i) taus.push_back(rng.uniform());
    return taus;
  }());
  std::vector<SceneDetections> raw(1);
  raw[0].scene_id = "a";
  for (int i = 0; i < 6; ++i)
    raw[0].boxes.push_back(det_box(i * 3.0 - 5.0, 0, ClassId::car, 0.4 + 0.1 * (i % 3)));
  std::vector<SceneRefineContext> contexts = {{&scene.cloud, &scene.field}};
  const FilterConfig config;
  const RefineResult a = refine_pseudo_labels(raw, contexts, config);
  const RefineResult b = refine_pseudo_labels(raw, contexts, config);
  REQUIRE(a.report.records.size() == b.report.records.size());
  for (std::size_t i = 0; i < a.report.records.size(); ++i) {
    CHECK(a.report.records[i].scene_id == b.report.records[i].scene_id);
    CHECK(a.report.records[i].box_index == b.report.records[i].box_index);
    CHECK(a.report.records[i].outcome == b.report.records[i].outcome);
  }
}
