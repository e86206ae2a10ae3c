#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trapkit/motion.hpp"
#include "trapkit/solar.hpp"
#include "trapkit/stereo.hpp"
#include "trapkit/synthgen.hpp"
#include "trapkit/timeutil.hpp"

namespace trapkit {

enum class MotionSourceKind { Image, Pir };
enum class StereoVariant { Active, Passive };

const char* to_string(MotionSourceKind k);
const char* to_string(StereoVariant v);

/// Per-mode hardware and detector selection.
struct ModePipeline {
  MotionSourceKind motion;
  StereoVariant stereo;
  bool ir_lamp;
  bool projector;
  friend bool operator==(const ModePipeline&, const ModePipeline&) = default;
};

ModePipeline pipeline_for(TrapMode mode);

/// An animal walking across the synthetic scene between two frames (inclusive).
struct Crossing {
  long start_frame = 0;
  long end_frame = 0;
  AnimalClass cls = AnimalClass::Deer;
  double z_m = 5.0;
  double x_from_m = -4.0;
  double x_to_m = 4.0;
  double scale = 1.0;
};

struct SyntheticStreamSpec {
  Timestamp start{};
  double interval_s = 1.0;
  long frames = 100;
  std::uint64_t seed = 1;
  CameraSpec camera;
  double background_mean = 60.0;  // darker than the natural animal albedo so crossings are visible
  double night_intensity_scale = 0.5;  // IR-lit scene brightness relative to daylight
  std::vector<Crossing> crossings;
  bool pir_from_crossings = true;  // presence while any crossing is active
};

/// Simulated stereo head: the left image is the captured intensity, the right view is
/// synthesised from the scene's true depth.
struct StereoRig {
  double baseline_m = 0.05;
  double focal_px = 600.0;
  double pattern_density = 0.05;
  double pattern_amplitude = 60.0;  // luminance units
  std::uint64_t pattern_seed = 1;
};

struct TrapConfig {
  GeoLocation location;
  std::optional<SyntheticStreamSpec> synthetic;
  std::filesystem::path frame_dir;  // used when `synthetic` is empty
  std::vector<PirSample> pir;
  DiffConfig diff;
  GmmConfig gmm;
  StereoConfig stereo;
  StereoRig rig;
  std::filesystem::path roi_path;  // empty = whole frame
  std::filesystem::path output_dir;
  int pre_roll = 5;
  double post_event_timeout_s = 10.0;
  std::size_t queue_capacity = 4;

  void validate() const;
};

/// Relative paths are resolved against `base_dir`.
TrapConfig trap_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
TrapConfig load_trap_config(const std::filesystem::path& path);

struct SourceFrame {
  long index = 0;
  Timestamp timestamp{};
  IntensityImage intensity;
  DepthMap true_depth;  // drives the simulated right view
};

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  /// nullopt once the source is exhausted.
  virtual std::optional<SourceFrame> next() = 0;
  /// Presence samples accompanying the frames, in time order.
  virtual std::vector<PirSample> pir_schedule() const { return {}; }
};

class SyntheticSource : public FrameSource {
 public:
  SyntheticSource(SyntheticStreamSpec spec, GeoLocation location);
  std::optional<SourceFrame> next() override;
  std::vector<PirSample> pir_schedule() const override;
  SceneSpec scene_at(long frame) const;

 private:
  SyntheticStreamSpec spec_;
  GeoLocation location_;
  long next_ = 0;
};

/// Reads `<unix_ms>.int.pgm` with a matching `<unix_ms>.dep.pgm`, in timestamp order.
class DirectorySource : public FrameSource {
 public:
  explicit DirectorySource(const std::filesystem::path& dir);
  std::optional<SourceFrame> next() override;
  std::size_t size() const { return stamps_.size(); }

 private:
  std::filesystem::path dir_;
  std::vector<long long> stamps_;
  std::size_t next_ = 0;
};

std::unique_ptr<FrameSource> make_source(const TrapConfig& cfg);

/// Depth as the trap's stereo head would report it in the given variant.
DepthMap stereo_depth(const IntensityImage& left, const DepthMap& true_depth, StereoVariant variant,
                      const StereoRig& rig, const StereoConfig& cfg);

struct CapturedFrame {
  long index = 0;
  Timestamp timestamp{};
  TrapMode mode = TrapMode::Daytime;
  bool pattern_applied = false;
  IntensityImage intensity;
  DepthMap scene_depth;  // input to the simulated stereo head
  DepthMap depth;        // what the stereo head reported
};

/// Fills `depth` from the stereo head in the variant recorded for the frame.
void capture_depth(CapturedFrame& f, const StereoRig& rig, const StereoConfig& cfg);

struct SequenceRecord {
  std::string id;
  Timestamp start{};
  Timestamp end{};
  TrapMode mode = TrapMode::Daytime;
  MotionTrigger trigger = MotionTrigger::Diff;
  MotionSourceKind detector = MotionSourceKind::Image;
  StereoVariant stereo = StereoVariant::Active;
  bool ir_lamp = false;
  bool projector = true;
  std::vector<long> frame_indices;
  std::vector<std::string> timestamps;
  std::vector<std::string> frames;  // relative file names, intensity then depth per frame
  std::size_t frame_count = 0;
  friend bool operator==(const SequenceRecord&, const SequenceRecord&) = default;
};

nlohmann::json sequence_to_json(const SequenceRecord& r);
SequenceRecord sequence_from_json(const nlohmann::json& j);

struct SequenceDraft {
  std::string id;
  MotionTrigger trigger = MotionTrigger::Diff;
  std::vector<CapturedFrame> frames;
};

/// Writes `<out>/<id>/<i>.int.pgm`, `<i>.dep.pgm` (i = position in the sequence) and `meta.json`.
SequenceRecord persist_sequence(const SequenceDraft& seq, const std::filesystem::path& out_dir);

struct RunSummary {
  long frames = 0;
  long day_frames = 0;
  long night_frames = 0;
  long motion_events = 0;
  std::vector<SequenceRecord> sequences;
};

/// Runs the trap over its source until exhaustion. `on_sequence` is invoked from the persist
/// stage, in sequence order.
RunSummary run_pipeline(const TrapConfig& cfg, FrameSource& source,
                        const std::function<void(const SequenceRecord&)>& on_sequence = {});
RunSummary run_pipeline(const TrapConfig& cfg);

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };
/// From TRAPKIT_LOG (error|warn|info|debug); defaults to warn.
LogLevel log_level();
void log_message(LogLevel level, const std::string& msg);

}  // namespace trapkit
