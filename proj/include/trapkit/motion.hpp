#pragma once

#include <optional>
#include <vector>

#include "trapkit/imaging.hpp"
#include "trapkit/timeutil.hpp"

namespace trapkit {

/// Pixels with set bits are evaluated; visitor areas are cleared.
using RoiMask = BinaryMask;

struct DiffConfig {
  double mean_change_threshold = 4.0;  // luminance units (0-255 scale)
};

struct GmmConfig {
  int max_components = 4;
  double learning_rate = 0.005;
  double match_threshold = 3.0;  // Mahalanobis distance
  double initial_variance = 15.0 * 15.0;
  double background_weight_fraction = 0.9;
  double complexity_prior = 0.05;
  double foreground_ratio_threshold = 0.02;

  void validate() const;
};

struct GaussianComponent {
  double weight = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};

/// Adaptive per-pixel mixture of Gaussians in luminance units. Components of a pixel
/// are kept sorted by descending weight.
class GmmState {
 public:
  GmmState() = default;
  GmmState(int width, int height, int max_components);

  int width() const { return width_; }
  int height() const { return height_; }
  int max_components() const { return max_components_; }

  int component_count(int x, int y) const { return counts_[index(x, y)]; }
  const GaussianComponent& component(int x, int y, int k) const { return modes_[index(x, y) * max_components_ + k]; }

  /// Updates one pixel with luminance `value`; returns true when the value is background.
  bool update_pixel(std::size_t pixel, double value, const GmmConfig& cfg);

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  int width_ = 0;
  int height_ = 0;
  int max_components_ = 0;
  std::vector<std::uint8_t> counts_;
  std::vector<GaussianComponent> modes_;
};

struct DiffResult {
  double mean_abs_diff = 0.0;
  bool fired = false;
};

struct GmmResult {
  BinaryMask foreground;
  double foreground_ratio = 0.0;
  bool fired = false;
};

enum class MotionTrigger { Diff, Gmm, Both, Pir };
const char* to_string(MotionTrigger t);
MotionTrigger trigger_from_string(const std::string& s);

struct MotionEvent {
  long frame_index = 0;
  Timestamp timestamp{};
  MotionTrigger trigger = MotionTrigger::Diff;
  double mean_abs_diff = 0.0;
  double foreground_ratio = 0.0;
  friend bool operator==(const MotionEvent&, const MotionEvent&) = default;
};

/// Mean absolute luminance change over the ROI.
DiffResult diff_detect(const IntensityImage& prev, const IntensityImage& curr, const RoiMask& roi,
                       const DiffConfig& cfg);

/// One background-subtraction step; `state` is updated in place. Pixels outside the ROI are
/// neither updated nor reported as foreground.
GmmResult gmm_step(GmmState& state, const IntensityImage& frame, const RoiMask& roi, const GmmConfig& cfg);

/// Daytime detector: frame differencing OR mixture-model foreground ratio.
class MotionDetector {
 public:
  MotionDetector(RoiMask roi, DiffConfig diff, GmmConfig gmm);

  std::optional<MotionEvent> step(const IntensityImage& frame, Timestamp t);
  void reset();

  long frames_seen() const { return frame_index_; }
  const GmmState& gmm_state() const { return state_; }

 private:
  RoiMask roi_;
  DiffConfig diff_cfg_;
  GmmConfig gmm_cfg_;
  GmmState state_;
  std::optional<IntensityImage> prev_;
  long frame_index_ = 0;
};

struct PirSample {
  Timestamp timestamp{};
  bool presence = false;
};

/// Emits one Pir event per rising edge of presence (the line idles low).
std::vector<MotionEvent> pir_source(const std::vector<PirSample>& schedule);

/// Streaming form of pir_source.
class PirEdgeDetector {
 public:
  std::optional<MotionEvent> step(const PirSample& sample);
  void reset();

 private:
  bool last_ = false;
  std::optional<Timestamp> last_time_;
  long index_ = 0;
};

}  // namespace trapkit
