#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>

#include "caseval/evaluate.hpp"
#include "caseval/manifest.hpp"
#include "caseval/stats.hpp"
#include "caseval/synth.hpp"

using namespace caseval;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("caseval_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_json(const fs::path& p, const nlohmann::json& doc) {
  std::ofstream out(p);
  out << doc.dump(2);
}

}  // namespace

TEST_CASE("manifest loading") {
  SUBCASE("an empty frame list is a valid manifest") {
    TempDir tmp;
    write_json(tmp.path / "m.json", {{"frames", nlohmann::json::array()}});
    const Manifest m = load_manifest((tmp.path / "m.json").string());
    CHECK(m.frames.empty());
  }

  SUBCASE("duplicate frame ids are rejected by name") {
    TempDir tmp;
    write_json(tmp.path / "m.json",
               {{"frames", {{{"id", "f0"}}, {{"id", "f0"}}}}});
    CHECK_THROWS_WITH_AS(load_manifest((tmp.path / "m.json").string()),
                         doctest::Contains("f0"), std::runtime_error);
  }

  SUBCASE("a missing referenced file is rejected by frame and key") {
    TempDir tmp;
    write_json(tmp.path / "m.json",
               {{"frames",
                 {{{"id", "f0"},
                   {"paths", {{"ca_gt", "not_there.png"}}}}}}});
    CHECK_THROWS_WITH_AS(load_manifest((tmp.path / "m.json").string()),
                         doctest::Contains("not_there.png"),
                         std::runtime_error);
  }

  SUBCASE("unknown split names are rejected") {
    TempDir tmp;
    write_json(tmp.path / "m.json",
               {{"frames", {{{"id", "f0"}, {"split", "validation"}}}}});
    CHECK_THROWS_AS(load_manifest((tmp.path / "m.json").string()),
                    std::runtime_error);
  }

  SUBCASE("save/load round trip preserves the manifest") {
    TempDir tmp;
    const SynthScene scene = generate_scene(5, SceneSpec{});
    Manifest m;
    m.root = tmp.path;
    m.categories = scene.categories;
    m.class_names = {{1, "barrel"}, {2, "cone"}};
    m.frames.push_back(write_scene(tmp.path.string(), "f0", "train", scene));
    save_manifest((tmp.path / "manifest.json").string(), m);
    const Manifest back = load_manifest((tmp.path / "manifest.json").string());
    CHECK(manifest_to_json(back) == manifest_to_json(m));
  }
}

TEST_CASE("generate_scene") {
  SUBCASE("the same seed generates byte-identical scenes") {
    const SceneSpec spec;
    const SynthScene a = generate_scene(77, spec);
    const SynthScene b = generate_scene(77, spec);
    CHECK(a.panoptic_gt == b.panoptic_gt);
    CHECK(a.panoptic_pred == b.panoptic_pred);
    CHECK(a.ca_gt == b.ca_gt);
    CHECK(a.ca_pred == b.ca_pred);
    CHECK(a.flow.u == b.flow.u);
    CHECK(a.depth.z == b.depth.z);
    CHECK(encode_panoptic_png(a.panoptic_gt) == encode_panoptic_png(b.panoptic_gt));
  }

  SUBCASE("perfect scenes have predictions equal to gt") {
    SceneSpec spec;
    spec.perfect = true;
    const SynthScene s = generate_scene(3, spec);
    CHECK(s.panoptic_pred == s.panoptic_gt);
    CHECK(s.ca_pred == s.ca_gt);
  }

  SUBCASE("every prediction hits its target IoU within 0.02") {
    SceneSpec spec;
    spec.max_objects = 8;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const SynthScene s = generate_scene(seed, spec);
      for (const auto& obj : s.objects) {
        if (obj.spurious || obj.dropped) continue;
        CHECK(std::abs(obj.achieved_iou - obj.target_iou) <= 0.02);
      }
    }
  }

  SUBCASE("a fixed 0.6 target lands in [0.58, 0.62] for every object") {
    SceneSpec spec;
    spec.min_target_iou = 0.6;
    spec.max_target_iou = 0.6;
    spec.low_target_fraction = 0.0;
    spec.drop_fraction = 0.0;
    spec.spurious_fraction = 0.0;
    for (std::uint64_t seed = 50; seed < 60; ++seed) {
      const SynthScene s = generate_scene(seed, spec);
      for (const auto& obj : s.objects) {
        CHECK(obj.achieved_iou >= 0.58);
        CHECK(obj.achieved_iou <= 0.62);
      }
    }
  }

  SUBCASE("moving objects carry flow equal to ego plus motion") {
    const SynthScene s = generate_scene(11, SceneSpec{});
    const FlowField ego = compute_ego_flow(s.depth, s.intrinsics, s.pose);
    const FlowField residual = suppress_ego_flow(s.flow, ego);
    for (int y = 0; y < s.ca_gt.height; ++y) {
      for (int x = 0; x < s.ca_gt.width; ++x) {
        const std::uint32_t ca_id = s.ca_gt.at(x, y);
        const std::size_t i = residual.index(x, y);
        if (ca_id == kVoidId) continue;
        const SynthObject* obj = nullptr;
        for (const auto& o : s.objects) {
          if (!o.spurious && o.ca_id == ca_id) obj = &o;
        }
        REQUIRE(obj != nullptr);
        CHECK(residual.u[i] == doctest::Approx(obj->motion_u).epsilon(1e-12));
        CHECK(residual.v[i] == doctest::Approx(obj->motion_v).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("evaluate_dataset") {
  SUBCASE("perfect predictions score 100.0 across the board") {
    TempDir tmp;
    SceneSpec spec;
    spec.perfect = true;
    Manifest m;
    m.root = tmp.path;
    for (int i = 0; i < 3; ++i) {
      const SynthScene s = generate_scene(200 + i, spec);
      m.frames.push_back(
          write_scene(tmp.path.string(), "f" + std::to_string(i), "test", s));
      if (i == 0) m.categories = s.categories;
    }
    EvaluateOptions opt;
    opt.track = Track::kClassAgnostic;
    opt.workers = 1;
    const EvaluationReport ca = evaluate_dataset(m, opt);
    CHECK(report_to_csv(ca) == "SQ,RQ,CAQ\n100.0,100.0,100.0\n");
    opt.track = Track::kPanoptic;
    const EvaluationReport pan = evaluate_dataset(m, opt);
    CHECK(report_to_csv(pan) == "PQ_All,PQ_Th,PQ_St\n100.0,100.0,100.0\n");
  }

  SUBCASE("the 0.8/0.6 two-TP configuration reports CAQ 35.0") {
    TempDir tmp;
    // Handmade frame: two matched pairs at IoU 0.8 and 0.6, two misses.
    LabelMap gt(40, 40), pred(40, 40);
    auto block = [](LabelMap& m, int x0, int y0, int w, int h, std::uint32_t id) {
      for (int y = y0; y < y0 + h; ++y) {
        for (int x = x0; x < x0 + w; ++x) m.at(x, y) = id;
      }
    };
    block(gt, 0, 0, 10, 5, 1);     // 50 px
    block(pred, 0, 0, 8, 5, 1);    // 40 px subset: IoU 0.8
    block(gt, 20, 0, 10, 5, 2);    // 50 px
    block(pred, 20, 0, 6, 5, 2);   // 30 px subset: IoU 0.6
    block(gt, 0, 20, 6, 6, 3);     // unmatched
    block(gt, 20, 20, 6, 6, 4);    // unmatched
    write_label_png((tmp.path / "gt.png").string(), gt);
    write_label_png((tmp.path / "pred.png").string(), pred);

    Manifest m;
    m.root = tmp.path;
    Frame f;
    f.id = "f0";
    f.split = "test";
    f.paths.ca_gt = "gt.png";
    f.paths.ca_pred = "pred.png";
    m.frames.push_back(f);

    EvaluateOptions opt;
    opt.track = Track::kClassAgnostic;
    const EvaluationReport r = evaluate_dataset(m, opt);
    CHECK(report_to_csv(r) == "SQ,RQ,CAQ\n70.0,50.0,35.0\n");
  }

  SUBCASE("EFS reports zero residual flow on a purely static scene") {
    TempDir tmp;
    SceneSpec spec;
    spec.moving_fraction = 0.0;
    spec.spurious_fraction = 0.0;
    Manifest m;
    m.root = tmp.path;
    const SynthScene s = generate_scene(300, spec);
    m.frames.push_back(write_scene(tmp.path.string(), "f0", "test", s));
    m.categories = s.categories;

    EvaluateOptions opt;
    opt.track = Track::kClassAgnostic;
    opt.efs = true;
    const EvaluationReport with_efs = evaluate_dataset(m, opt);
    REQUIRE(with_efs.frames_failed == 0);
    REQUIRE(!with_efs.frames[0].instance_flow.empty());
    opt.efs = false;
    const EvaluationReport without = evaluate_dataset(m, opt);
    for (const auto& [id, norm] : with_efs.frames[0].instance_flow) {
      // Flow reaches the evaluator through the 1/64-px PNG grid, so the
      // static-scene residual is bounded by codec quantization, not zero.
      CHECK(norm <= 2.0 / 128.0);
      CHECK(norm < without.frames[0].instance_flow.at(id));
    }
  }

  SUBCASE("per-frame failures are reported, not skipped") {
    TempDir tmp;
    write_label_png((tmp.path / "ok.png").string(), LabelMap(8, 8, 1));
    Manifest m;
    m.root = tmp.path;
    Frame good;
    good.id = "good";
    good.split = "test";
    good.paths.ca_gt = "ok.png";
    good.paths.ca_pred = "ok.png";
    Frame bad;
    bad.id = "bad";
    bad.split = "test";  // no paths at all
    m.frames = {good, bad};
    EvaluateOptions opt;
    opt.track = Track::kClassAgnostic;
    const EvaluationReport r = evaluate_dataset(m, opt);
    CHECK(r.frames.size() == 2);
    CHECK(r.frames_evaluated == 1);
    CHECK(r.frames_failed == 1);
    CHECK(!r.frames[1].ok);
    CHECK(!r.frames[1].error.empty());
  }

  SUBCASE("split filtering narrows the frame set") {
    TempDir tmp;
    SceneSpec spec;
    spec.perfect = true;
    Manifest m;
    m.root = tmp.path;
    const SynthScene s = generate_scene(42, spec);
    m.frames.push_back(write_scene(tmp.path.string(), "tr", "train", s));
    m.frames.push_back(write_scene(tmp.path.string(), "te", "test", s));
    EvaluateOptions opt;
    opt.track = Track::kClassAgnostic;
    opt.split = "train";
    CHECK(evaluate_dataset(m, opt).frames.size() == 1);
  }
}

TEST_CASE("compute_stats") {
  SUBCASE("empty manifest yields all-zero stats") {
    Manifest m;
    const DatasetStats s = compute_stats(m);
    CHECK(s.total_moving == 0);
    CHECK(s.total_static == 0);
    CHECK(s.per_split.empty());
  }

  SUBCASE("three moving and two static instances count as (3, 2)") {
    Manifest m;
    Frame f;
    f.id = "f0";
    f.split = "train";
    f.motion = std::map<std::uint32_t, bool>{
        {10001, true}, {10002, true}, {11001, true}, {11002, false}, {12001, false}};
    m.frames.push_back(f);
    const DatasetStats s = compute_stats(m);
    CHECK(s.per_split.at("train").moving == 3);
    CHECK(s.per_split.at("train").static_ == 2);
  }

  SUBCASE("a frame without motion flags is an error naming the frame") {
    Manifest m;
    Frame f;
    f.id = "frame_x";
    f.split = "test";
    m.frames.push_back(f);
    CHECK_THROWS_WITH_AS(compute_stats(m), doctest::Contains("frame_x"),
                         std::runtime_error);
  }

  SUBCASE("synthetic manifests count their own objects") {
    TempDir tmp;
    Manifest m;
    m.root = tmp.path;
    const SynthScene s = generate_scene(500, SceneSpec{});
    m.frames.push_back(write_scene(tmp.path.string(), "f0", "test", s));
    const DatasetStats stats = compute_stats(m);
    std::uint64_t moving = 0, static_count = 0;
    for (const auto& obj : s.objects) {
      if (obj.spurious) continue;
      (obj.moving ? moving : static_count) += 1;
    }
    CHECK(stats.per_split.at("test").moving == moving);
    CHECK(stats.per_split.at("test").static_ == static_count);
    // Pixel counts cover exactly the nonvoid panoptic gt area.
    std::uint64_t total = 0;
    for (const auto& [cat, count] : stats.pixels_per_category) total += count;
    CHECK(total == std::uint64_t(s.panoptic_gt.width) * s.panoptic_gt.height);
  }
}

TEST_CASE("evaluation determinism across worker counts") {
  TempDir tmp;
  Manifest m;
  m.root = tmp.path;
  for (int i = 0; i < 8; ++i) {
    const SynthScene s = generate_scene(700 + i, SceneSpec{});
    m.frames.push_back(
        write_scene(tmp.path.string(), "f" + std::to_string(i), "test", s));
    if (i == 0) m.categories = s.categories;
  }
  EvaluateOptions opt;
  opt.track = Track::kClassAgnostic;
  std::string first_json, first_csv;
  for (int workers : {1, 4, 16}) {
    opt.workers = workers;
    const EvaluationReport r = evaluate_dataset(m, opt);
    const std::string js = report_to_json(r).dump(2);
    const std::string csv = report_to_csv(r);
    if (first_json.empty()) {
      first_json = js;
      first_csv = csv;
    } else {
      CHECK(js == first_json);
      CHECK(csv == first_csv);
    }
  }
}
