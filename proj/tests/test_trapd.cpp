#include <doctest.h>

#include <set>

#include "support.hpp"
#include "trapkit/dataset_io.hpp"
#include "trapkit/trapd.hpp"

using namespace trapkit;
namespace fs = std::filesystem;
using namespace std::chrono;

namespace {

const GeoLocation kCologne(50.9375, 6.9603);

Timestamp cologne_sunset() {
  const SolarEvents ev = solar_events(kCologne, year{2024} / June / 21);
  return ceil<seconds>(*ev.sunset);
}

TrapConfig make_cfg(const fs::path& out, const SyntheticStreamSpec& s) {
  TrapConfig cfg;
  cfg.location = kCologne;
  cfg.synthetic = s;
  cfg.output_dir = out;
  return cfg;
}

SyntheticStreamSpec day_stream(long frames) {
  SyntheticStreamSpec s;
  s.start = parse_iso8601("2024-06-21T10:00:00Z");
  s.frames = frames;
  s.seed = 3;
  return s;
}

// Starts 40 s before sunset; a deer crosses after dark.
SyntheticStreamSpec sunset_stream() {
  SyntheticStreamSpec s;
  s.start = cologne_sunset() - seconds(40);
  s.frames = 120;
  s.seed = 5;
  Crossing c;
  c.start_frame = 70;
  c.end_frame = 90;
  s.crossings.push_back(c);
  return s;
}

std::vector<SourceFrame> source_frames(const TrapConfig& cfg) {
  SyntheticSource src(*cfg.synthetic, cfg.location);
  std::vector<SourceFrame> out;
  while (auto f = src.next()) out.push_back(std::move(*f));
  return out;
}

}  // namespace

TEST_CASE("pipeline_for matches the mode table") {
  const ModePipeline day = pipeline_for(TrapMode::Daytime);
  CHECK(day.motion == MotionSourceKind::Image);
  CHECK(day.stereo == StereoVariant::Active);
  CHECK_FALSE(day.ir_lamp);
  CHECK(day.projector);
  const ModePipeline night = pipeline_for(TrapMode::Nighttime);
  CHECK(night.motion == MotionSourceKind::Pir);
  CHECK(night.stereo == StereoVariant::Passive);
  CHECK(night.ir_lamp);
  CHECK_FALSE(night.projector);
}

TEST_CASE("static stream records nothing") {
  test_support::TempDir dir;
  const TrapConfig cfg = make_cfg(dir.path(), day_stream(1000));
  const RunSummary s = run_pipeline(cfg);
  CHECK(s.frames == 1000);
  CHECK(s.day_frames == 1000);
  CHECK(s.motion_events == 0);
  CHECK(s.sequences.empty());
}

TEST_CASE("daytime crossing yields one image-triggered sequence") {
  test_support::TempDir dir;
  SyntheticStreamSpec spec = day_stream(140);
  Crossing c;
  c.start_frame = 60;
  c.end_frame = 100;
  spec.crossings.push_back(c);
  spec.pir_from_crossings = false;
  const TrapConfig cfg = make_cfg(dir.path(), spec);
  const RunSummary s = run_pipeline(cfg);
  REQUIRE(s.sequences.size() == 1);
  const SequenceRecord& r = s.sequences[0];
  CHECK(r.mode == TrapMode::Daytime);
  CHECK(r.trigger != MotionTrigger::Pir);
  CHECK(r.detector == MotionSourceKind::Image);
  CHECK(r.stereo == StereoVariant::Active);
  CHECK(r.projector);
  CHECK(r.frame_indices.front() >= c.start_frame - cfg.pre_roll);
  CHECK(r.frame_indices.back() >= 90);
  for (std::size_t i = 1; i < r.frame_indices.size(); ++i) CHECK(r.frame_indices[i] == r.frame_indices[i - 1] + 1);

  // Active stereo: recorded depth is the patterned block-match result.
  const auto frames = source_frames(cfg);
  const long k = r.frame_indices[10];
  const DepthMap expect = stereo_depth(frames[static_cast<std::size_t>(k)].intensity,
                                       frames[static_cast<std::size_t>(k)].true_depth, StereoVariant::Active, cfg.rig,
                                       cfg.stereo);
  CHECK(read_pgm(dir.path() / r.id / "10.dep.pgm") == expect);
  CHECK(read_pgm(dir.path() / r.id / "10.int.pgm") == frames[static_cast<std::size_t>(k)].intensity);
}

TEST_CASE("sunset stream with presence after dark yields a passive night sequence") {
  test_support::TempDir dir;
  const TrapConfig cfg = make_cfg(dir.path(), sunset_stream());
  const RunSummary s = run_pipeline(cfg);
  CHECK(s.day_frames == 40);
  CHECK(s.night_frames == 80);
  REQUIRE(s.sequences.size() == 1);
  const SequenceRecord& r = s.sequences[0];
  CHECK(r.mode == TrapMode::Nighttime);
  CHECK(r.trigger == MotionTrigger::Pir);
  CHECK(r.detector == MotionSourceKind::Pir);
  CHECK(r.stereo == StereoVariant::Passive);
  CHECK(r.ir_lamp);
  CHECK_FALSE(r.projector);
  CHECK(r.frame_indices.front() == 70 - cfg.pre_roll);

  const auto frames = source_frames(cfg);
  for (std::size_t i = 0; i < r.frame_indices.size(); i += 7) {
    const SourceFrame& f = frames[static_cast<std::size_t>(r.frame_indices[i])];
    const DepthMap passive = stereo_depth(f.intensity, f.true_depth, StereoVariant::Passive, cfg.rig, cfg.stereo);
    CHECK(read_pgm(dir.path() / r.id / (std::to_string(i) + ".dep.pgm")) == passive);
  }
}

TEST_CASE("mode switch closes an open sequence") {
  test_support::TempDir dir;
  SyntheticStreamSpec spec = sunset_stream();
  spec.start = cologne_sunset() - seconds(100);
  spec.frames = 160;
  spec.crossings.clear();
  Crossing c;  // walks through the sunset instant
  c.start_frame = 70;
  c.end_frame = 130;
  c.z_m = 3.0;
  spec.crossings.push_back(c);
  const TrapConfig cfg = make_cfg(dir.path(), spec);
  const RunSummary s = run_pipeline(cfg);
  REQUIRE(s.sequences.size() == 2);
  CHECK(s.sequences[0].mode == TrapMode::Daytime);
  CHECK(s.sequences[0].frame_indices.back() == 99);
  CHECK(s.sequences[1].mode == TrapMode::Nighttime);
  CHECK(s.sequences[1].trigger == MotionTrigger::Pir);
  CHECK(s.sequences[1].frame_indices.front() == 100);
}

TEST_CASE("property: persisted modes, ordering and re-run stability") {
  SyntheticStreamSpec spec = sunset_stream();
  spec.start = cologne_sunset() - seconds(400);
  spec.frames = 320;
  spec.interval_s = 2.0;
  spec.crossings.clear();
  for (long k : {80L, 140L, 230L, 280L}) {
    Crossing c;
    c.start_frame = k;
    c.end_frame = k + 20;
    c.cls = k % 20 ? AnimalClass::Boar : AnimalClass::Deer;
    c.z_m = 4.0;
    spec.crossings.push_back(c);
  }
  test_support::TempDir a, b;
  const TrapConfig ca = make_cfg(a.path(), spec), cb = make_cfg(b.path(), spec);
  std::vector<std::string> seen;
  const RunSummary ra = run_pipeline(ca);
  auto src = make_source(cb);
  const RunSummary rb = run_pipeline(cb, *src, [&](const SequenceRecord& r) { seen.push_back(r.id); });
  REQUIRE(ra.sequences.size() >= 4);
  REQUIRE(ra.sequences.size() == rb.sequences.size());
  REQUIRE(seen.size() == rb.sequences.size());
  const auto frames = source_frames(ca);

  long last = -1;
  for (std::size_t i = 0; i < ra.sequences.size(); ++i) {
    const SequenceRecord& r = ra.sequences[i];
    CHECK(seen[i] == r.id);
    CHECK(r.start <= r.end);
    CHECK(r.frame_count == r.frame_indices.size());
    CHECK(r.frames.size() == 2 * r.frame_count);
    for (std::size_t k = 0; k < r.frame_indices.size(); ++k) {
      REQUIRE(r.frame_indices[k] > last);
      last = r.frame_indices[k];
      REQUIRE(mode_at(kCologne, parse_iso8601(r.timestamps[k])) == r.mode);
    }
    CHECK(r.stereo == pipeline_for(r.mode).stereo);
    CHECK(r.detector == pipeline_for(r.mode).motion);
    CHECK((r.trigger == MotionTrigger::Pir) == (r.mode == TrapMode::Nighttime));
    CHECK(sequence_from_json(read_json(a.path() / r.id / "meta.json")) == r);
    // The dot pattern is applied exactly in daytime.
    const SourceFrame& f = frames[static_cast<std::size_t>(r.frame_indices.front())];
    CHECK(read_pgm(a.path() / r.id / "0.dep.pgm") ==
          stereo_depth(f.intensity, f.true_depth, pipeline_for(r.mode).stereo, ca.rig, ca.stereo));
    CHECK(test_support::read_file(a.path() / r.id / "meta.json") == test_support::read_file(b.path() / r.id / "meta.json"));
  }
}

TEST_CASE("persist_sequence writes frames and meta") {
  test_support::TempDir dir;
  auto frame = [](long i) {
    CapturedFrame f;
    f.index = 100 + i;
    f.timestamp = parse_iso8601("2024-06-21T22:00:00Z") + seconds(i);
    f.mode = TrapMode::Nighttime;
    f.intensity = IntensityImage(8, 6, static_cast<std::uint16_t>(i));
    f.depth = DepthMap(8, 6, static_cast<std::uint16_t>(3000 + i));
    return f;
  };
  SequenceDraft one{"s1", MotionTrigger::Pir, {frame(0)}};
  const SequenceRecord r1 = persist_sequence(one, dir.path());
  CHECK(r1.frame_count == 1);
  std::set<std::string> files;
  for (const auto& e : fs::directory_iterator(dir.path() / "s1")) files.insert(e.path().filename().string());
  CHECK(files == std::set<std::string>{"0.int.pgm", "0.dep.pgm", "meta.json"});
  CHECK(sequence_from_json(read_json(dir.path() / "s1" / "meta.json")) == r1);

  SequenceDraft many{"s25", MotionTrigger::Pir, {}};
  for (long i = 0; i < 25; ++i) many.frames.push_back(frame(i));
  const SequenceRecord r25 = persist_sequence(many, dir.path());
  std::set<int> int_idx, dep_idx;
  for (const auto& e : fs::directory_iterator(dir.path() / "s25")) {
    const std::string name = e.path().filename().string();
    if (name == "meta.json") continue;
    const auto dot = name.find('.');
    const int idx = std::stoi(name.substr(0, dot));
    (name.substr(dot) == ".int.pgm" ? int_idx : dep_idx).insert(idx);
  }
  CHECK(int_idx.size() == 25);
  CHECK(dep_idx == int_idx);
  CHECK(*int_idx.begin() == 0);
  CHECK(*int_idx.rbegin() == 24);
  CHECK(read_pgm(dir.path() / "s25" / "24.dep.pgm") == many.frames[24].depth);
  CHECK(r25.frame_indices.front() == 100);
  CHECK(r25.start == many.frames.front().timestamp);
  CHECK(r25.end == many.frames.back().timestamp);
  CHECK(sequence_from_json(read_json(dir.path() / "s25" / "meta.json")) == r25);

  CHECK_THROWS(persist_sequence(SequenceDraft{"empty", MotionTrigger::Pir, {}}, dir.path()));
  SequenceDraft mixed = many;
  mixed.id = "mixed";
  mixed.frames[3].mode = TrapMode::Daytime;
  CHECK_THROWS(persist_sequence(mixed, dir.path()));
}

TEST_CASE("trap config from json") {
  test_support::TempDir dir;
  const Json j = {{"location", {{"lat", 50.9375}, {"lon", 6.9603}}},
                  {"source",
                   {{"type", "synthetic"},
                    {"start", "2024-06-21T19:00:00Z"},
                    {"frames", 30},
                    {"crossings", {{{"start_frame", 3}, {"end_frame", 9}, {"class", "fox"}}}}}},
                  {"pir", {{{"timestamp", "2024-06-21T23:00:00Z"}, {"presence", true}}}},
                  {"gmm", {{"max_components", 3}}},
                  {"output_dir", "out"},
                  {"pre_roll", 2}};
  const TrapConfig c = trap_config_from_json(j, dir.path());
  CHECK(c.output_dir == dir.path() / "out");
  REQUIRE(c.synthetic.has_value());
  CHECK(c.synthetic->frames == 30);
  REQUIRE(c.synthetic->crossings.size() == 1);
  CHECK(c.synthetic->crossings[0].cls == AnimalClass::Fox);
  CHECK(c.pir.size() == 1);
  CHECK(c.gmm.max_components == 3);
  CHECK(c.pre_roll == 2);

  Json bad = j;
  bad["post_event_timeout_s"] = 0;
  CHECK_THROWS(trap_config_from_json(bad, dir.path()));
  bad = j;
  bad["source"]["type"] = "camera";
  CHECK_THROWS(trap_config_from_json(bad, dir.path()));
  bad = j;
  bad["roi"] = "missing.pgm";
  CHECK_THROWS(trap_config_from_json(bad, dir.path()));
  bad = j;
  bad["source"] = {{"type", "directory"}, {"path", "nowhere"}};
  CHECK_THROWS(trap_config_from_json(bad, dir.path()));
}

TEST_CASE("directory source reads frames in timestamp order") {
  test_support::TempDir dir;
  for (long long ms : {3000LL, 1000LL, 2000LL}) {
    write_pgm16(dir.path() / (std::to_string(ms) + ".int.pgm"), IntensityImage(4, 3, static_cast<std::uint16_t>(ms / 1000)));
  }
  write_pgm16(dir.path() / "2000.dep.pgm", DepthMap(4, 3, 1234));
  DirectorySource src(dir.path());
  CHECK(src.size() == 3);
  std::vector<long long> stamps;
  while (auto f = src.next()) {
    stamps.push_back(to_unix_millis(f->timestamp));
    CHECK(f->intensity[0] == stamps.back() / 1000);
    CHECK(f->true_depth[0] == (stamps.back() == 2000 ? 1234 : 0));
  }
  CHECK(stamps == std::vector<long long>{1000, 2000, 3000});
}
