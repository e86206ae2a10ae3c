#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "trapkit/cocoeval.hpp"
#include "trapkit/imaging.hpp"
#include "trapkit/motion.hpp"
#include "trapkit/synthgen.hpp"

namespace trapkit {

using Json = nlohmann::json;

Json rle_to_json(const RleRecord& rle);
RleRecord rle_from_json(const Json& j);

Json bbox_to_json(const BoundingBox& b);
BoundingBox bbox_from_json(const Json& j);

Json detection_to_json(const Detection& d);
Detection detection_from_json(const Json& j);

Json motion_event_to_json(const MotionEvent& e);
MotionEvent motion_event_from_json(const Json& j);

/// One row of a split's Table-1 style summary.
struct SplitSummary {
  std::size_t frames = 0;
  std::array<std::size_t, kNumClasses> per_class{};
  std::size_t instances = 0;
  friend bool operator==(const SplitSummary&, const SplitSummary&) = default;
};

struct Manifest {
  std::map<std::string, SplitSummary> splits;
  std::string depth_source = "synthetic";
  Json generator;  // free-form generation parameters
};

Json manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const Json& j);

struct DatasetFrame {
  std::int64_t image_id = 0;
  IntensityImage intensity;
  DepthMap depth;
  std::vector<LabeledInstance> instances;
};

/// Writes `<dir>/<split>/<id>.int.pgm`, `<id>.dep.pgm` and `<dir>/<split>/annotations.json`, then
/// merges the split's summary into `<dir>/manifest.json`. Image ids start at `first_image_id`.
Manifest write_dataset(const std::vector<RenderedFrame>& frames, const std::string& split,
                       const std::filesystem::path& dir, std::int64_t first_image_id = 0,
                       const Json& generator = Json::object());

std::vector<DatasetFrame> read_dataset(const std::filesystem::path& dir, const std::string& split);
Manifest read_manifest(const std::filesystem::path& dir);

/// Ground truth from an annotations.json file.
std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& annotations_json);
std::vector<GroundTruth> to_ground_truth(const std::vector<DatasetFrame>& frames);

void write_predictions(const std::vector<Detection>& dets, const std::filesystem::path& path);
std::vector<Detection> read_predictions(const std::filesystem::path& path);

Json read_json(const std::filesystem::path& path);
void write_json(const Json& j, const std::filesystem::path& path, int indent = 2);

struct GenerateOptions {
  std::uint64_t seed = 1;
  int frames = 100;
  double split_ratio = 0.75;  // fraction of frames in the train split
  SceneRanges ranges;
};

/// Frame i is rendered from sample_scene(scene_seed(seed, i)); train frames come first.
std::uint64_t scene_seed(std::uint64_t seed, int index);
Manifest generate_dataset(const GenerateOptions& opt, const std::filesystem::path& dir);

}  // namespace trapkit
