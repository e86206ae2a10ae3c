#include "trapkit/trapd.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <regex>
#include <stdexcept>
#include <thread>

#include "trapkit/dataset_io.hpp"

namespace trapkit {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(MotionSourceKind k) { return k == MotionSourceKind::Image ? "image" : "pir"; }
const char* to_string(StereoVariant v) { return v == StereoVariant::Active ? "active" : "passive"; }

ModePipeline pipeline_for(TrapMode mode) {
  if (mode == TrapMode::Daytime) return {MotionSourceKind::Image, StereoVariant::Active, false, true};
  return {MotionSourceKind::Pir, StereoVariant::Passive, true, false};
}

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("TRAPKIT_LOG");
    if (!env) return LogLevel::Warn;
    std::string s(env);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "error") return LogLevel::Error;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
  }();
  return level;
}

void log_message(LogLevel level, const std::string& msg) {
  if (level > log_level()) return;
  static std::mutex mu;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard lock(mu);
  std::cerr << "[trapkit " << names[static_cast<int>(level)] << "] " << msg << '\n';
}

// ---------------------------------------------------------------------------------------------
// Configuration

void TrapConfig::validate() const {
  if (!synthetic && frame_dir.empty()) throw std::invalid_argument("trap config: no frame source");
  if (synthetic) {
    if (synthetic->frames < 0) throw std::invalid_argument("trap config: negative frame count");
    if (!(synthetic->interval_s > 0.0)) throw std::invalid_argument("trap config: frame interval must be positive");
    synthetic->camera.validate();
  }
  if (output_dir.empty()) throw std::invalid_argument("trap config: output_dir is required");
  if (pre_roll < 0) throw std::invalid_argument("trap config: pre_roll must be >= 0");
  if (!(post_event_timeout_s > 0.0)) throw std::invalid_argument("trap config: post_event_timeout must be positive");
  if (queue_capacity < 1) throw std::invalid_argument("trap config: queue_capacity must be >= 1");
  if (!(rig.baseline_m > 0.0) || !(rig.focal_px > 0.0)) throw std::invalid_argument("trap config: bad stereo rig");
  gmm.validate();
  stereo.validate();
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

AnimalClass class_from_name(const std::string& s) {
  for (int c = 0; c < kNumClasses; ++c) {
    if (s == kClassNames[c]) return static_cast<AnimalClass>(c);
  }
  throw std::invalid_argument("unknown animal class: " + s);
}

}  // namespace

TrapConfig trap_config_from_json(const json& j, const fs::path& base_dir) {
  TrapConfig c;
  const auto& loc = j.at("location");
  c.location = GeoLocation(loc.at("lat").get<double>(), loc.at("lon").get<double>());

  const auto& src = j.at("source");
  const std::string type = src.at("type").get<std::string>();
  if (type == "synthetic") {
    SyntheticStreamSpec s;
    s.start = parse_iso8601(src.at("start").get<std::string>());
    s.interval_s = src.value("interval_s", s.interval_s);
    s.frames = src.value("frames", s.frames);
    s.seed = src.value("seed", s.seed);
    s.camera.width = src.value("width", s.camera.width);
    s.camera.height = src.value("height", s.camera.height);
    s.camera.height_m = src.value("camera_height_m", s.camera.height_m);
    s.camera.pitch_deg = src.value("pitch_deg", s.camera.pitch_deg);
    s.camera.fov_deg = src.value("fov_deg", s.camera.fov_deg);
    s.background_mean = src.value("background_mean", s.background_mean);
    s.night_intensity_scale = src.value("night_intensity_scale", s.night_intensity_scale);
    s.pir_from_crossings = src.value("pir_from_crossings", s.pir_from_crossings);
    for (const auto& x : src.value("crossings", json::array())) {
      Crossing cr;
      cr.start_frame = x.at("start_frame").get<long>();
      cr.end_frame = x.at("end_frame").get<long>();
      if (cr.end_frame < cr.start_frame) throw std::invalid_argument("crossing ends before it starts");
      cr.cls = class_from_name(x.value("class", std::string("deer")));
      cr.z_m = x.value("z_m", cr.z_m);
      cr.x_from_m = x.value("x_from_m", cr.x_from_m);
      cr.x_to_m = x.value("x_to_m", cr.x_to_m);
      cr.scale = x.value("scale", cr.scale);
      s.crossings.push_back(cr);
    }
    c.synthetic = s;
  } else if (type == "directory") {
    c.frame_dir = resolve(base_dir, src.at("path").get<std::string>());
  } else {
    throw std::invalid_argument("unknown source type: " + type);
  }

  for (const auto& p : j.value("pir", json::array())) {
    c.pir.push_back({parse_iso8601(p.at("timestamp").get<std::string>()), p.at("presence").get<bool>()});
  }
  if (j.contains("diff")) c.diff.mean_change_threshold = j["diff"].value("mean_change_threshold", c.diff.mean_change_threshold);
  if (j.contains("gmm")) {
    const auto& g = j["gmm"];
    c.gmm.max_components = g.value("max_components", c.gmm.max_components);
    c.gmm.learning_rate = g.value("learning_rate", c.gmm.learning_rate);
    c.gmm.match_threshold = g.value("match_threshold", c.gmm.match_threshold);
    c.gmm.initial_variance = g.value("initial_variance", c.gmm.initial_variance);
    c.gmm.background_weight_fraction = g.value("background_weight_fraction", c.gmm.background_weight_fraction);
    c.gmm.complexity_prior = g.value("complexity_prior", c.gmm.complexity_prior);
    c.gmm.foreground_ratio_threshold = g.value("foreground_ratio_threshold", c.gmm.foreground_ratio_threshold);
  }
  if (j.contains("stereo")) {
    const auto& s = j["stereo"];
    c.stereo.block_size = s.value("block_size", c.stereo.block_size);
    c.stereo.max_disparity = s.value("max_disparity", c.stereo.max_disparity);
    c.stereo.uniqueness_ratio = s.value("uniqueness_ratio", c.stereo.uniqueness_ratio);
    c.stereo.lr_consistency_tol = s.value("lr_consistency_tol", c.stereo.lr_consistency_tol);
    c.stereo.min_texture = s.value("min_texture", c.stereo.min_texture);
  }
  if (j.contains("rig")) {
    const auto& r = j["rig"];
    c.rig.baseline_m = r.value("baseline_m", c.rig.baseline_m);
    c.rig.focal_px = r.value("focal_px", c.rig.focal_px);
    c.rig.pattern_density = r.value("pattern_density", c.rig.pattern_density);
    c.rig.pattern_amplitude = r.value("pattern_amplitude", c.rig.pattern_amplitude);
    c.rig.pattern_seed = r.value("pattern_seed", c.rig.pattern_seed);
  }
  if (j.contains("roi")) c.roi_path = resolve(base_dir, j["roi"].get<std::string>());
  c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
  c.pre_roll = j.value("pre_roll", c.pre_roll);
  c.post_event_timeout_s = j.value("post_event_timeout_s", c.post_event_timeout_s);
  c.queue_capacity = j.value("queue_capacity", c.queue_capacity);
  c.validate();
  if (!c.roi_path.empty() && !fs::exists(c.roi_path)) throw std::invalid_argument("ROI file not found: " + c.roi_path.string());
  if (!c.synthetic && !fs::is_directory(c.frame_dir))
    throw std::invalid_argument("frame directory not found: " + c.frame_dir.string());
  return c;
}

TrapConfig load_trap_config(const fs::path& path) { return trap_config_from_json(read_json(path), path.parent_path()); }

// ---------------------------------------------------------------------------------------------
// Sources

SyntheticSource::SyntheticSource(SyntheticStreamSpec spec, GeoLocation location)
    : spec_(std::move(spec)), location_(location) {}

SceneSpec SyntheticSource::scene_at(long frame) const {
  SceneSpec s;
  const Timestamp t = spec_.start + std::chrono::milliseconds(std::llround(frame * spec_.interval_s * 1000.0));
  s.seed = spec_.seed * 1000003ULL + static_cast<std::uint64_t>(frame);
  s.camera = spec_.camera;
  s.background_seed = spec_.seed;
  s.background_mean = spec_.background_mean;
  if (mode_at(location_, t) == TrapMode::Nighttime) s.illumination.intensity_scale = spec_.night_intensity_scale;
  for (const auto& c : spec_.crossings) {
    if (frame < c.start_frame || frame > c.end_frame) continue;
    const double u = c.end_frame == c.start_frame ? 0.0
                                                  : static_cast<double>(frame - c.start_frame) / (c.end_frame - c.start_frame);
    AnimalSpec a;
    a.cls = c.cls;
    a.z_m = c.z_m;
    a.x_m = c.x_from_m + u * (c.x_to_m - c.x_from_m);
    a.heading_deg = c.x_to_m >= c.x_from_m ? 90.0 : 270.0;
    a.scale = c.scale;
    a.gait_phase = std::fmod(static_cast<double>(frame - c.start_frame) * 0.25, 1.0);
    s.animals.push_back(a);
  }
  return s;
}

std::optional<SourceFrame> SyntheticSource::next() {
  if (next_ >= spec_.frames) return std::nullopt;
  const long k = next_++;
  RenderedFrame r = render_scene(scene_at(k));
  SourceFrame f;
  f.index = k;
  f.timestamp = spec_.start + std::chrono::milliseconds(std::llround(k * spec_.interval_s * 1000.0));
  f.intensity = std::move(r.intensity);
  f.true_depth = std::move(r.depth);
  return f;
}

std::vector<PirSample> SyntheticSource::pir_schedule() const {
  std::vector<PirSample> out;
  if (!spec_.pir_from_crossings) return out;
  for (long k = 0; k < spec_.frames; ++k) {
    bool present = false;
    for (const auto& c : spec_.crossings) present = present || (k >= c.start_frame && k <= c.end_frame);
    out.push_back({spec_.start + std::chrono::milliseconds(std::llround(k * spec_.interval_s * 1000.0)), present});
  }
  return out;
}

DirectorySource::DirectorySource(const fs::path& dir) : dir_(dir) {
  static const std::regex pattern(R"((\d+)\.int\.pgm)");
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, pattern)) stamps_.push_back(std::stoll(m[1].str()));
  }
  std::sort(stamps_.begin(), stamps_.end());
}

std::optional<SourceFrame> DirectorySource::next() {
  if (next_ >= stamps_.size()) return std::nullopt;
  const long long ms = stamps_[next_];
  SourceFrame f;
  f.index = static_cast<long>(next_++);
  f.timestamp = from_unix_millis(ms);
  f.intensity = read_pgm(dir_ / (std::to_string(ms) + ".int.pgm"));
  const fs::path dep = dir_ / (std::to_string(ms) + ".dep.pgm");
  f.true_depth = fs::exists(dep) ? read_pgm(dep) : DepthMap(f.intensity.width(), f.intensity.height(), 0);
  if (!f.true_depth.same_shape(f.intensity)) throw std::runtime_error("depth and intensity sizes differ at " + std::to_string(ms));
  return f;
}

std::unique_ptr<FrameSource> make_source(const TrapConfig& cfg) {
  if (cfg.synthetic) return std::make_unique<SyntheticSource>(*cfg.synthetic, cfg.location);
  return std::make_unique<DirectorySource>(cfg.frame_dir);
}

DepthMap stereo_depth(const IntensityImage& left, const DepthMap& true_depth, StereoVariant variant,
                      const StereoRig& rig, const StereoConfig& cfg) {
  RectifiedPair pair;
  pair.left = variant == StereoVariant::Active
                  ? project_dot_pattern(left, rig.pattern_seed, rig.pattern_density, rig.pattern_amplitude)
                  : left;
  pair.right = synthesize_right_view(pair.left, true_depth, rig.baseline_m, rig.focal_px);
  pair.baseline_m = rig.baseline_m;
  pair.focal_px = rig.focal_px;
  return disparity_to_depth(block_match(pair, cfg), rig.baseline_m, rig.focal_px);
}

void capture_depth(CapturedFrame& f, const StereoRig& rig, const StereoConfig& cfg) {
  const StereoVariant v = f.pattern_applied ? StereoVariant::Active : StereoVariant::Passive;
  f.depth = stereo_depth(f.intensity, f.scene_depth, v, rig, cfg);
}

// ---------------------------------------------------------------------------------------------
// Persistence

json sequence_to_json(const SequenceRecord& r) {
  return {{"id", r.id},
          {"start", format_iso8601(r.start)},
          {"end", format_iso8601(r.end)},
          {"mode", to_string(r.mode)},
          {"trigger", to_string(r.trigger)},
          {"detector", to_string(r.detector)},
          {"stereo", to_string(r.stereo)},
          {"ir_lamp", r.ir_lamp},
          {"projector", r.projector},
          {"frame_indices", r.frame_indices},
          {"timestamps", r.timestamps},
          {"frames", r.frames},
          {"frame_count", r.frame_count}};
}

SequenceRecord sequence_from_json(const json& j) {
  SequenceRecord r;
  r.id = j.at("id").get<std::string>();
  r.start = parse_iso8601(j.at("start").get<std::string>());
  r.end = parse_iso8601(j.at("end").get<std::string>());
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == to_string(TrapMode::Daytime)) r.mode = TrapMode::Daytime;
  else if (mode == to_string(TrapMode::Nighttime)) r.mode = TrapMode::Nighttime;
  else throw std::runtime_error("unknown mode: " + mode);
  r.trigger = trigger_from_string(j.at("trigger").get<std::string>());
  r.detector = j.at("detector").get<std::string>() == "pir" ? MotionSourceKind::Pir : MotionSourceKind::Image;
  r.stereo = j.at("stereo").get<std::string>() == "passive" ? StereoVariant::Passive : StereoVariant::Active;
  r.ir_lamp = j.at("ir_lamp").get<bool>();
  r.projector = j.at("projector").get<bool>();
  r.frame_indices = j.at("frame_indices").get<std::vector<long>>();
  r.timestamps = j.at("timestamps").get<std::vector<std::string>>();
  r.frames = j.at("frames").get<std::vector<std::string>>();
  r.frame_count = j.at("frame_count").get<std::size_t>();
  return r;
}

SequenceRecord persist_sequence(const SequenceDraft& seq, const fs::path& out_dir) {
  if (seq.frames.empty()) throw std::invalid_argument("persist_sequence: empty sequence");
  const TrapMode mode = seq.frames.front().mode;
  for (const auto& f : seq.frames) {
    if (f.mode != mode) throw std::invalid_argument("persist_sequence: frames span a mode change");
    if (f.depth.empty()) throw std::invalid_argument("persist_sequence: frame without depth");
  }
  const fs::path dir = out_dir / seq.id;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  const ModePipeline p = pipeline_for(mode);
  SequenceRecord r;
  r.id = seq.id;
  r.start = seq.frames.front().timestamp;
  r.end = seq.frames.back().timestamp;
  r.mode = mode;
  r.trigger = seq.trigger;
  r.detector = p.motion;
  r.stereo = p.stereo;
  r.ir_lamp = p.ir_lamp;
  r.projector = p.projector;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const CapturedFrame& f = seq.frames[i];
    const std::string base = std::to_string(i);
    write_pgm16(dir / (base + ".int.pgm"), f.intensity);
    write_pgm16(dir / (base + ".dep.pgm"), f.depth);
    r.frames.push_back(base + ".int.pgm");
    r.frames.push_back(base + ".dep.pgm");
    r.frame_indices.push_back(f.index);
    r.timestamps.push_back(format_iso8601(f.timestamp));
  }
  r.frame_count = seq.frames.size();
  write_json(sequence_to_json(r), dir / "meta.json");
  return r;
}

// ---------------------------------------------------------------------------------------------
// Pipeline

namespace {

/// Single-producer single-consumer bounded queue; close() wakes the consumer for shutdown.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  bool push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_empty_, not_full_;
  std::deque<T> items_;
  bool closed_ = false;
};

std::string sequence_id(int n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seq_%04d", n);
  return buf;
}

}  // namespace

RunSummary run_pipeline(const TrapConfig& cfg, FrameSource& source,
                        const std::function<void(const SequenceRecord&)>& on_sequence) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec || !fs::is_directory(cfg.output_dir))
    throw std::runtime_error("output directory not writable: " + cfg.output_dir.string());

  std::vector<PirSample> pir = source.pir_schedule();
  pir.insert(pir.end(), cfg.pir.begin(), cfg.pir.end());
  std::stable_sort(pir.begin(), pir.end(), [](const PirSample& a, const PirSample& b) { return a.timestamp < b.timestamp; });
  // Merge same-instant samples from both schedules: presence wins.
  std::vector<PirSample> merged;
  for (const auto& s : pir) {
    if (!merged.empty() && merged.back().timestamp == s.timestamp) merged.back().presence = merged.back().presence || s.presence;
    else merged.push_back(s);
  }
  std::size_t pir_pos = 0;
  PirEdgeDetector pir_edges;
  bool pir_present = false;

  RunSummary summary;
  BoundedQueue<SequenceDraft> queue(cfg.queue_capacity);
  std::exception_ptr persist_error;
  std::thread persister([&] {
    try {
      while (auto draft = queue.pop()) {
        for (auto& f : draft->frames) capture_depth(f, cfg.rig, cfg.stereo);
        SequenceRecord r = persist_sequence(*draft, cfg.output_dir);
        log_message(LogLevel::Info, "persisted " + r.id + " (" + std::to_string(r.frame_count) + " frames, " +
                                        to_string(r.mode) + ", " + to_string(r.trigger) + ")");
        if (on_sequence) on_sequence(r);
        summary.sequences.push_back(std::move(r));
      }
    } catch (...) {
      persist_error = std::current_exception();
      queue.close();
    }
  });

  std::optional<MotionDetector> detector;
  std::deque<CapturedFrame> pre_roll;
  std::optional<SequenceDraft> open;
  Timestamp last_activity{};
  std::optional<TrapMode> current_mode;
  int next_sequence = 0;
  const auto timeout = std::chrono::milliseconds(std::llround(cfg.post_event_timeout_s * 1000.0));

  auto close_open = [&] {
    if (!open) return;
    queue.push(std::move(*open));  // false only after a persist failure, reported below
    open.reset();
  };

  try {
    while (auto frame = source.next()) {
      if (persist_error) break;
      const Timestamp t = frame->timestamp;
      const TrapMode mode = mode_at(cfg.location, t);
      const ModePipeline p = pipeline_for(mode);
      ++summary.frames;
      ++(mode == TrapMode::Daytime ? summary.day_frames : summary.night_frames);

      if (current_mode && *current_mode != mode) {
        log_message(LogLevel::Info, std::string("mode switch to ") + to_string(mode) + " at " + format_iso8601(t));
        close_open();
        pre_roll.clear();
        detector.reset();
        pir_edges.reset();  // a presence already high when night starts counts as a new edge
      }
      current_mode = mode;

      // The PIR line is sampled continuously; its edges only count at night.
      std::optional<MotionEvent> event;
      while (pir_pos < merged.size() && merged[pir_pos].timestamp <= t) {
        auto ev = pir_edges.step(merged[pir_pos]);
        pir_present = merged[pir_pos].presence;
        if (ev && p.motion == MotionSourceKind::Pir && !event) {
          event = ev;
          event->frame_index = frame->index;
        }
        ++pir_pos;
      }
      if (p.motion == MotionSourceKind::Image) {
        if (!detector) {
          const RoiMask roi = cfg.roi_path.empty()
                                  ? RoiMask(frame->intensity.width(), frame->intensity.height(), std::uint8_t{1})
                                  : read_mask_pgm(cfg.roi_path);
          detector.emplace(roi, cfg.diff, cfg.gmm);
        }
        event = detector->step(frame->intensity, t);
        if (event) event->frame_index = frame->index;
      }
      const bool active = event.has_value() || (p.motion == MotionSourceKind::Pir && pir_present);
      if (event) {
        ++summary.motion_events;
        log_message(LogLevel::Debug, std::string("motion ") + to_string(event->trigger) + " at frame " + std::to_string(frame->index));
      }

      if (open && !active && t - last_activity > timeout) close_open();

      if (!open && !event) {
        if (cfg.pre_roll > 0) {
          CapturedFrame c{frame->index, t, mode, p.projector, std::move(frame->intensity), std::move(frame->true_depth), {}};
          pre_roll.push_back(std::move(c));
          if (pre_roll.size() > static_cast<std::size_t>(cfg.pre_roll)) pre_roll.pop_front();
        }
        continue;
      }

      CapturedFrame c{frame->index, t, mode, p.projector, std::move(frame->intensity), std::move(frame->true_depth), {}};
      if (!open) {
        open.emplace();
        open->id = sequence_id(next_sequence++);
        open->trigger = event->trigger;
        for (auto& f : pre_roll) open->frames.push_back(std::move(f));
        pre_roll.clear();
      }
      open->frames.push_back(std::move(c));
      if (active) last_activity = t;
    }
    close_open();
  } catch (...) {
    queue.close();
    persister.join();
    throw;
  }
  queue.close();
  persister.join();
  if (persist_error) std::rethrow_exception(persist_error);
  return summary;
}

RunSummary run_pipeline(const TrapConfig& cfg) {
  auto source = make_source(cfg);
  return run_pipeline(cfg, *source);
}

}  // namespace trapkit
