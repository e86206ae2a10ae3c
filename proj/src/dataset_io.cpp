#include "trapkit/dataset_io.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "trapkit/timeutil.hpp"

namespace trapkit {

namespace fs = std::filesystem;

namespace {

std::string frame_stem(std::int64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06lld", static_cast<long long>(id));
  return buf;
}

int class_from_json(const Json& j) {
  const int c = j.at("class_id").get<int>();
  if (c < 0 || c >= kNumClasses) throw std::runtime_error("class_id out of range: " + std::to_string(c));
  return c;
}

}  // namespace

Json rle_to_json(const RleRecord& rle) { return {{"size", {rle.height, rle.width}}, {"counts", rle.counts}}; }

RleRecord rle_from_json(const Json& j) {
  RleRecord r;
  const auto& size = j.at("size");
  if (!size.is_array() || size.size() != 2) throw std::runtime_error("RLE size must be [height, width]");
  r.height = size[0].get<int>();
  r.width = size[1].get<int>();
  r.counts = j.at("counts").get<std::vector<std::uint32_t>>();
  return r;
}

Json bbox_to_json(const BoundingBox& b) { return {b.x, b.y, b.w, b.h}; }

BoundingBox bbox_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw std::runtime_error("bbox must be [x, y, w, h]");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

Json detection_to_json(const Detection& d) {
  return {{"image_id", d.image_id},
          {"class_id", d.class_id},
          {"class", kClassNames[d.class_id]},
          {"score", d.score},
          {"bbox", bbox_to_json(d.bbox)},
          {"segmentation", rle_to_json(rle_encode(d.mask))}};
}

Detection detection_from_json(const Json& j) {
  Detection d;
  d.image_id = j.at("image_id").get<std::int64_t>();
  d.class_id = j.at("class_id").get<int>();
  d.score = j.at("score").get<double>();
  if (!(d.score >= 0.0 && d.score <= 1.0)) throw std::runtime_error("detection score outside [0,1]");
  d.bbox = bbox_from_json(j.at("bbox"));
  d.mask = rle_decode(rle_from_json(j.at("segmentation")));
  return d;
}

Json motion_event_to_json(const MotionEvent& e) {
  return {{"frame_index", e.frame_index},
          {"timestamp", format_iso8601(e.timestamp)},
          {"trigger", to_string(e.trigger)},
          {"mean_abs_diff", e.mean_abs_diff},
          {"foreground_ratio", e.foreground_ratio}};
}

MotionEvent motion_event_from_json(const Json& j) {
  MotionEvent e;
  e.frame_index = j.at("frame_index").get<long>();
  e.timestamp = parse_iso8601(j.at("timestamp").get<std::string>());
  e.trigger = trigger_from_string(j.at("trigger").get<std::string>());
  e.mean_abs_diff = j.at("mean_abs_diff").get<double>();
  e.foreground_ratio = j.at("foreground_ratio").get<double>();
  return e;
}

Json manifest_to_json(const Manifest& m) {
  Json splits = Json::object();
  for (const auto& [name, s] : m.splits) {
    Json classes = Json::object();
    for (int c = 0; c < kNumClasses; ++c) classes[kClassNames[c]] = s.per_class[static_cast<std::size_t>(c)];
    splits[name] = {{"frames", s.frames}, {"classes", classes}, {"instances", s.instances}};
  }
  return {{"splits", splits}, {"depth_source", m.depth_source}, {"generator", m.generator}};
}

Manifest manifest_from_json(const Json& j) {
  Manifest m;
  for (const auto& [name, s] : j.at("splits").items()) {
    SplitSummary sum;
    sum.frames = s.at("frames").get<std::size_t>();
    sum.instances = s.at("instances").get<std::size_t>();
    for (int c = 0; c < kNumClasses; ++c) sum.per_class[static_cast<std::size_t>(c)] = s.at("classes").at(kClassNames[c]).get<std::size_t>();
    m.splits[name] = sum;
  }
  m.depth_source = j.value("depth_source", "synthetic");
  m.generator = j.value("generator", Json::object());
  return m;
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_json(const Json& j, const fs::path& path, int indent) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(indent) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Manifest read_manifest(const fs::path& dir) { return manifest_from_json(read_json(dir / "manifest.json")); }

Manifest write_dataset(const std::vector<RenderedFrame>& frames, const std::string& split, const fs::path& dir,
                       std::int64_t first_image_id, const Json& generator) {
  if (frames.empty()) throw std::invalid_argument("write_dataset: no frames");
  if (split.empty() || split.find('/') != std::string::npos) throw std::invalid_argument("write_dataset: bad split name");
  const fs::path split_dir = dir / split;
  fs::create_directories(split_dir);

  SplitSummary sum;
  Json images = Json::array();
  Json annotations = Json::array();
  std::int64_t ann_id = 1;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const RenderedFrame& f = frames[i];
    const std::int64_t id = first_image_id + static_cast<std::int64_t>(i);
    const std::string stem = frame_stem(id);
    write_pgm16(split_dir / (stem + ".int.pgm"), f.intensity);
    write_pgm16(split_dir / (stem + ".dep.pgm"), f.depth);
    images.push_back({{"id", id},
                      {"width", f.intensity.width()},
                      {"height", f.intensity.height()},
                      {"intensity", stem + ".int.pgm"},
                      {"depth", stem + ".dep.pgm"}});
    for (const auto& inst : derive_annotations(f)) {
      annotations.push_back({{"id", ann_id++},
                             {"image_id", id},
                             {"class_id", inst.class_id},
                             {"class", kClassNames[inst.class_id]},
                             {"bbox", bbox_to_json(inst.bbox)},
                             {"area", inst.mask.count()},
                             {"segmentation", rle_to_json(rle_encode(inst.mask))}});
      ++sum.per_class[static_cast<std::size_t>(inst.class_id)];
      ++sum.instances;
    }
    ++sum.frames;
  }
  write_json({{"split", split}, {"images", images}, {"annotations", annotations}}, split_dir / "annotations.json");

  Manifest m;
  if (fs::exists(dir / "manifest.json")) m = read_manifest(dir);
  m.splits[split] = sum;
  if (!generator.empty()) m.generator = generator;
  write_json(manifest_to_json(m), dir / "manifest.json");
  return m;
}

std::vector<DatasetFrame> read_dataset(const fs::path& dir, const std::string& split) {
  const fs::path split_dir = dir / split;
  const Json j = read_json(split_dir / "annotations.json");
  std::vector<DatasetFrame> frames;
  std::map<std::int64_t, std::size_t> index;
  for (const auto& img : j.at("images")) {
    DatasetFrame f;
    f.image_id = img.at("id").get<std::int64_t>();
    f.intensity = read_pgm(split_dir / img.at("intensity").get<std::string>());
    f.depth = read_pgm(split_dir / img.at("depth").get<std::string>());
    if (f.intensity.width() != img.at("width").get<int>() || f.intensity.height() != img.at("height").get<int>() ||
        !f.depth.same_shape(f.intensity))
      throw std::runtime_error("frame " + std::to_string(f.image_id) + " dimensions disagree with annotations");
    if (!index.emplace(f.image_id, frames.size()).second)
      throw std::runtime_error("duplicate image id " + std::to_string(f.image_id));
    frames.push_back(std::move(f));
  }
  for (const auto& a : j.at("annotations")) {
    const auto it = index.find(a.at("image_id").get<std::int64_t>());
    if (it == index.end()) throw std::runtime_error("annotation references unknown image");
    DatasetFrame& f = frames[it->second];
    BinaryMask mask = rle_decode(rle_from_json(a.at("segmentation")));
    if (!mask.same_shape(f.intensity)) throw std::runtime_error("annotation mask size differs from its image");
    LabeledInstance inst = make_instance(class_from_json(a), std::move(mask));
    if (inst.bbox != bbox_from_json(a.at("bbox"))) throw std::runtime_error("annotation bbox is not the mask's tight bound");
    f.instances.push_back(std::move(inst));
  }
  return frames;
}

std::vector<GroundTruth> read_ground_truth(const fs::path& annotations_json) {
  const Json j = read_json(annotations_json);
  std::vector<GroundTruth> out;
  for (const auto& a : j.at("annotations")) {
    GroundTruth g;
    g.image_id = a.at("image_id").get<std::int64_t>();
    g.class_id = class_from_json(a);
    g.mask = rle_decode(rle_from_json(a.at("segmentation")));
    g.bbox = bbox_from_json(a.at("bbox"));
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<GroundTruth> to_ground_truth(const std::vector<DatasetFrame>& frames) {
  std::vector<GroundTruth> out;
  for (const auto& f : frames) {
    for (const auto& inst : f.instances) out.push_back({f.image_id, inst.class_id, inst.bbox, inst.mask});
  }
  return out;
}

void write_predictions(const std::vector<Detection>& dets, const fs::path& path) {
  Json arr = Json::array();
  for (const auto& d : dets) arr.push_back(detection_to_json(d));
  write_json(arr, path, 0);
}

std::vector<Detection> read_predictions(const fs::path& path) {
  const Json j = read_json(path);
  if (!j.is_array()) throw std::runtime_error(path.string() + ": predictions must be a JSON array");
  std::vector<Detection> out;
  for (const auto& d : j) out.push_back(detection_from_json(d));
  return out;
}

std::uint64_t scene_seed(std::uint64_t seed, int index) {
  std::uint64_t z = seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(index) + 1;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Manifest generate_dataset(const GenerateOptions& opt, const fs::path& dir) {
  if (opt.frames < 1) throw std::invalid_argument("generate: frames must be positive");
  if (!(opt.split_ratio >= 0.0 && opt.split_ratio <= 1.0)) throw std::invalid_argument("generate: split ratio outside [0,1]");
  const int n_train = static_cast<int>(opt.frames * opt.split_ratio + 0.5);
  const Json generator = {{"seed", opt.seed},
                          {"frames", opt.frames},
                          {"split_ratio", opt.split_ratio},
                          {"camouflage", {opt.ranges.camouflage.lo, opt.ranges.camouflage.hi}},
                          {"image", {opt.ranges.image_width, opt.ranges.image_height}}};
  Manifest m;
  auto emit = [&](int begin, int end, const std::string& split) {
    if (begin >= end) return;
    std::vector<RenderedFrame> frames;
    for (int i = begin; i < end; ++i) frames.push_back(render_scene(sample_scene(scene_seed(opt.seed, i), opt.ranges)));
    m = write_dataset(frames, split, dir, begin, generator);
  };
  fs::create_directories(dir);
  fs::remove(dir / "manifest.json");
  emit(0, n_train, "train");
  emit(n_train, opt.frames, "test");
  return m;
}

}  // namespace trapkit
