#include <doctest.h>

#include <random>

#include "support.hpp"
#include "trapkit/dataset_io.hpp"

using namespace trapkit;
namespace fs = std::filesystem;

namespace {

RenderedFrame one_deer_frame() {
  SceneSpec s;
  s.background_seed = 5;
  AnimalSpec a;
  a.cls = AnimalClass::Deer;
  a.z_m = 4.0;
  s.animals.push_back(a);
  return render_scene(s);
}

std::vector<RenderedFrame> sampled_frames(int n, std::uint64_t seed) {
  std::vector<RenderedFrame> out;
  for (int i = 0; i < n; ++i) out.push_back(render_scene(sample_scene(scene_seed(seed, i), SceneRanges{})));
  return out;
}

}  // namespace

TEST_CASE("one frame with one deer") {
  test_support::TempDir dir;
  const Manifest m = write_dataset({one_deer_frame()}, "train", dir.path());
  const SplitSummary& s = m.splits.at("train");
  CHECK(s.frames == 1);
  CHECK(s.instances == 1);
  CHECK(s.per_class[0] == 1);
  CHECK(s.per_class[1] + s.per_class[2] + s.per_class[3] == 0);
  const Manifest again = read_manifest(dir.path());
  CHECK(again.splits == m.splits);
  const Json j = read_json(dir.path() / "manifest.json");
  CHECK(j["splits"]["train"]["classes"]["deer"] == 1);
  CHECK(j["splits"]["train"]["frames"] == 1);
  CHECK(fs::exists(dir.path() / "train" / "000000.int.pgm"));
  CHECK(fs::exists(dir.path() / "train" / "000000.dep.pgm"));
}

TEST_CASE("reread dataset is bit-identical") {
  test_support::TempDir dir;
  const auto frames = sampled_frames(12, 3);
  write_dataset(frames, "test", dir.path(), 40);
  const auto back = read_dataset(dir.path(), "test");
  REQUIRE(back.size() == frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    CHECK(back[i].image_id == 40 + static_cast<std::int64_t>(i));
    CHECK(back[i].intensity == frames[i].intensity);
    CHECK(back[i].depth == frames[i].depth);
    const auto ann = derive_annotations(frames[i]);
    REQUIRE(back[i].instances.size() == ann.size());
    for (std::size_t k = 0; k < ann.size(); ++k) {
      CHECK(back[i].instances[k].class_id == ann[k].class_id);
      CHECK(back[i].instances[k].bbox == ann[k].bbox);
      CHECK(back[i].instances[k].mask == ann[k].mask);
    }
  }
  // Rewriting what was read reproduces the annotation file byte for byte.
  const std::string original = test_support::read_file(dir.path() / "test" / "annotations.json");
  test_support::TempDir dir2;
  write_dataset(frames, "test", dir2.path(), 40);
  CHECK(test_support::read_file(dir2.path() / "test" / "annotations.json") == original);
}

TEST_CASE("manifest totals equal a recount of the annotation lists") {
  test_support::TempDir dir;
  const auto frames = sampled_frames(100, 9);
  const Manifest m = write_dataset(frames, "train", dir.path());
  std::size_t total = 0;
  std::array<std::size_t, kNumClasses> per_class{};
  for (const auto& f : frames) {
    const auto ann = derive_annotations(f);
    total += ann.size();
    for (const auto& a : ann) ++per_class[static_cast<std::size_t>(a.class_id)];
  }
  CHECK(m.splits.at("train").instances == total);
  CHECK(m.splits.at("train").per_class == per_class);
  CHECK(read_json(dir.path() / "train" / "annotations.json")["annotations"].size() == total);
  CHECK(read_ground_truth(dir.path() / "train" / "annotations.json").size() == total);
}

TEST_CASE("splits merge into one manifest") {
  test_support::TempDir dir;
  write_dataset(sampled_frames(3, 1), "train", dir.path());
  const Manifest m = write_dataset(sampled_frames(2, 2), "test", dir.path(), 3);
  CHECK(m.splits.size() == 2);
  CHECK(m.splits.at("train").frames == 3);
  CHECK(m.splits.at("test").frames == 2);
  CHECK_THROWS(write_dataset({}, "train", dir.path()));
  CHECK_THROWS(write_dataset(sampled_frames(1, 1), "a/b", dir.path()));
}

TEST_CASE("predictions roundtrip") {
  test_support::TempDir dir;
  std::mt19937_64 rng(31);
  std::vector<Detection> dets;
  for (int i = 0; i < 20; ++i) {
    BinaryMask m(9, 7);
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = (rng() % 3 == 0) ? 1 : 0;
    m.set(1, 1);
    dets.push_back({i / 4, i % kNumClasses, static_cast<double>(rng() % 1000) / 999.0, bbox_from_mask(m), m});
  }
  write_predictions(dets, dir.path() / "p.json");
  const auto back = read_predictions(dir.path() / "p.json");
  REQUIRE(back.size() == dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    CHECK(back[i].image_id == dets[i].image_id);
    CHECK(back[i].class_id == dets[i].class_id);
    CHECK(back[i].score == dets[i].score);
    CHECK(back[i].bbox == dets[i].bbox);
    CHECK(back[i].mask == dets[i].mask);
  }
  test_support::write_file(dir.path() / "bad.json", "{\"a\": 1}");
  CHECK_THROWS(read_predictions(dir.path() / "bad.json"));
  test_support::write_file(dir.path() / "broken.json", "[{");
  CHECK_THROWS(read_predictions(dir.path() / "broken.json"));
  Json j = detection_to_json(dets[0]);
  j["score"] = 1.5;
  CHECK_THROWS(detection_from_json(j));
}

TEST_CASE("json helpers") {
  const RleRecord r{2, 3, {1, 4, 1}};
  CHECK(rle_from_json(rle_to_json(r)).counts == r.counts);
  CHECK(rle_to_json(r)["size"] == Json::array({2, 3}));
  CHECK(bbox_from_json(bbox_to_json({1, 2, 3, 4})) == BoundingBox{1, 2, 3, 4});
  CHECK_THROWS(bbox_from_json(Json::array({1, 2, 3})));

  MotionEvent e;
  e.frame_index = 17;
  e.timestamp = parse_iso8601("2024-06-21T04:10:00Z");
  e.trigger = MotionTrigger::Both;
  e.mean_abs_diff = 3.25;
  e.foreground_ratio = 0.125;
  const MotionEvent back = motion_event_from_json(motion_event_to_json(e));
  CHECK(back.frame_index == 17);
  CHECK(back.timestamp == e.timestamp);
  CHECK(back.trigger == MotionTrigger::Both);
  CHECK(back.mean_abs_diff == 3.25);
  CHECK(back.foreground_ratio == 0.125);
}

TEST_CASE("tampered annotations are rejected") {
  test_support::TempDir dir;
  write_dataset({one_deer_frame()}, "train", dir.path());
  const fs::path ann = dir.path() / "train" / "annotations.json";
  Json j = read_json(ann);
  j["annotations"][0]["bbox"][2] = j["annotations"][0]["bbox"][2].get<int>() + 1;
  write_json(j, ann);
  CHECK_THROWS(read_dataset(dir.path(), "train"));
  j = read_json(ann);
  j["annotations"][0]["class_id"] = 7;
  write_json(j, ann);
  CHECK_THROWS(read_ground_truth(ann));
}

TEST_CASE("generate_dataset splits deterministically") {
  test_support::TempDir a, b;
  GenerateOptions opt;
  opt.seed = 4;
  opt.frames = 8;
  opt.split_ratio = 0.75;
  const Manifest ma = generate_dataset(opt, a.path());
  CHECK(ma.splits.at("train").frames == 6);
  CHECK(ma.splits.at("test").frames == 2);
  generate_dataset(opt, b.path());
  CHECK(test_support::read_file(a.path() / "manifest.json") == test_support::read_file(b.path() / "manifest.json"));
  CHECK(test_support::read_file(a.path() / "test" / "000007.int.pgm") ==
        test_support::read_file(b.path() / "test" / "000007.int.pgm"));
  const auto test = read_dataset(a.path(), "test");
  REQUIRE(test.size() == 2);
  CHECK(test[0].image_id == 6);
  CHECK(test[0].intensity == render_scene(sample_scene(scene_seed(4, 6), SceneRanges{})).intensity);
  CHECK(scene_seed(4, 0) != scene_seed(4, 1));
  CHECK(scene_seed(4, 0) != scene_seed(5, 0));
  opt.frames = 0;
  CHECK_THROWS(generate_dataset(opt, a.path()));
}
