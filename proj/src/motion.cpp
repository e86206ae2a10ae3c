#include "trapkit/motion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace trapkit {

namespace {

constexpr double kMinVariance = 4.0;
constexpr double kMaxVarianceFactor = 5.0;

double luminance(std::uint16_t raw) { return raw / kLevelsPerUnit; }

}  // namespace

void GmmConfig::validate() const {
  if (max_components < 1 || max_components > 255) throw std::invalid_argument("gmm: max_components out of range");
  if (!(learning_rate > 0.0 && learning_rate < 1.0)) throw std::invalid_argument("gmm: learning_rate not in (0,1)");
  if (!(match_threshold > 0.0)) throw std::invalid_argument("gmm: match_threshold must be positive");
  if (!(initial_variance > 0.0)) throw std::invalid_argument("gmm: initial_variance must be positive");
  if (!(background_weight_fraction > 0.0)) throw std::invalid_argument("gmm: background_weight_fraction must be positive");
  if (!(complexity_prior > 0.0)) throw std::invalid_argument("gmm: complexity_prior must be positive");
  if (!(foreground_ratio_threshold > 0.0 && foreground_ratio_threshold < 1.0))
    throw std::invalid_argument("gmm: foreground_ratio_threshold not in (0,1)");
}

GmmState::GmmState(int width, int height, int max_components)
    : width_(width), height_(height), max_components_(max_components) {
  if (width < 1 || height < 1) throw std::invalid_argument("gmm: bad dimensions");
  if (max_components < 1 || max_components > 255) throw std::invalid_argument("gmm: max_components out of range");
  const std::size_t n = static_cast<std::size_t>(width) * height;
  counts_.assign(n, 0);
  modes_.assign(n * max_components, GaussianComponent{});
}

bool GmmState::update_pixel(std::size_t pixel, double value, const GmmConfig& cfg) {
  GaussianComponent* modes = &modes_[pixel * max_components_];
  int n = counts_[pixel];
  const double alpha = cfg.learning_rate;
  const double decay = 1.0 - alpha;
  const double prune = alpha * cfg.complexity_prior;
  const double gate = cfg.match_threshold * cfg.match_threshold;
  const double max_var = kMaxVarianceFactor * cfg.initial_variance;

  // Background decision uses the model as it stood before this observation.
  int matched = -1;
  bool background = false;
  double cumulative = 0.0;
  for (int k = 0; k < n; ++k) {
    const double d = value - modes[k].mean;
    if (d * d < gate * modes[k].variance) {
      matched = k;
      background = cumulative < cfg.background_weight_fraction;
      break;
    }
    cumulative += modes[k].weight;
  }

  for (int k = 0; k < n; ++k) modes[k].weight = decay * modes[k].weight - prune;

  if (matched >= 0) {
    GaussianComponent& m = modes[matched];
    m.weight += alpha;
    const double rho = alpha / m.weight;
    const double d = value - m.mean;
    m.mean += rho * d;
    m.variance = std::clamp(m.variance + rho * (d * d - m.variance), kMinVariance, max_var);
  }

  int kept = 0;
  for (int k = 0; k < n; ++k) {
    if (modes[k].weight > 0.0) modes[kept++] = modes[k];
  }
  n = kept;

  if (matched < 0) {
    if (n == max_components_) --n;
    modes[n] = GaussianComponent{n == 0 ? 1.0 : alpha, value, cfg.initial_variance};
    ++n;
  }

  double total = 0.0;
  for (int k = 0; k < n; ++k) total += modes[k].weight;
  for (int k = 0; k < n; ++k) modes[k].weight /= total;

  // Insertion sort keeps equal weights in their previous order.
  for (int k = 1; k < n; ++k) {
    const GaussianComponent c = modes[k];
    int j = k - 1;
    while (j >= 0 && modes[j].weight < c.weight) {
      modes[j + 1] = modes[j];
      --j;
    }
    modes[j + 1] = c;
  }
  counts_[pixel] = static_cast<std::uint8_t>(n);
  return background;
}

const char* to_string(MotionTrigger t) {
  switch (t) {
    case MotionTrigger::Diff: return "Diff";
    case MotionTrigger::Gmm: return "Gmm";
    case MotionTrigger::Both: return "Both";
    case MotionTrigger::Pir: return "Pir";
  }
  return "Diff";
}

MotionTrigger trigger_from_string(const std::string& s) {
  if (s == "Diff") return MotionTrigger::Diff;
  if (s == "Gmm") return MotionTrigger::Gmm;
  if (s == "Both") return MotionTrigger::Both;
  if (s == "Pir") return MotionTrigger::Pir;
  throw std::invalid_argument("unknown trigger: " + s);
}

DiffResult diff_detect(const IntensityImage& prev, const IntensityImage& curr, const RoiMask& roi,
                       const DiffConfig& cfg) {
  if (!prev.same_shape(curr) || !prev.same_shape(roi)) throw std::invalid_argument("diff_detect: dimension mismatch");
  if (!(cfg.mean_change_threshold > 0.0)) throw std::invalid_argument("diff_detect: threshold must be positive");
  std::uint64_t sum = 0;
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < prev.size(); ++i) {
    if (!roi[i]) continue;
    sum += static_cast<std::uint64_t>(std::abs(static_cast<int>(curr[i]) - static_cast<int>(prev[i])));
    ++n;
  }
  if (n == 0) throw std::invalid_argument("diff_detect: ROI has no set pixels");
  DiffResult r;
  r.mean_abs_diff = static_cast<double>(sum) / static_cast<double>(n) / kLevelsPerUnit;
  r.fired = r.mean_abs_diff >= cfg.mean_change_threshold;
  return r;
}

GmmResult gmm_step(GmmState& state, const IntensityImage& frame, const RoiMask& roi, const GmmConfig& cfg) {
  if (state.width() != frame.width() || state.height() != frame.height() || !frame.same_shape(roi))
    throw std::invalid_argument("gmm_step: dimension mismatch");
  if (state.max_components() != cfg.max_components) throw std::invalid_argument("gmm_step: component count mismatch");
  GmmResult r{BinaryMask(frame.width(), frame.height()), 0.0, false};
  std::size_t roi_count = 0;
  std::size_t fg_count = 0;
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (!roi[i]) continue;
    ++roi_count;
    if (!state.update_pixel(i, luminance(frame[i]), cfg)) {
      r.foreground[i] = 1;
      ++fg_count;
    }
  }
  r.foreground_ratio = roi_count ? static_cast<double>(fg_count) / static_cast<double>(roi_count) : 0.0;
  r.fired = r.foreground_ratio >= cfg.foreground_ratio_threshold;
  return r;
}

MotionDetector::MotionDetector(RoiMask roi, DiffConfig diff, GmmConfig gmm)
    : roi_(std::move(roi)), diff_cfg_(diff), gmm_cfg_(gmm) {
  gmm_cfg_.validate();
  if (!roi_.any()) throw std::invalid_argument("motion: ROI has no set pixels");
  if (!(diff_cfg_.mean_change_threshold > 0.0)) throw std::invalid_argument("motion: diff threshold must be positive");
  reset();
}

void MotionDetector::reset() {
  state_ = GmmState(roi_.width(), roi_.height(), gmm_cfg_.max_components);
  prev_.reset();
  frame_index_ = 0;
}

std::optional<MotionEvent> MotionDetector::step(const IntensityImage& frame, Timestamp t) {
  if (!frame.same_shape(roi_)) throw std::invalid_argument("motion: frame does not match ROI dimensions");
  const long index = frame_index_++;
  // The first frame only seeds the models.
  if (!prev_) {
    gmm_step(state_, frame, roi_, gmm_cfg_);
    prev_ = frame;
    return std::nullopt;
  }
  const DiffResult diff = diff_detect(*prev_, frame, roi_, diff_cfg_);
  const GmmResult gmm = gmm_step(state_, frame, roi_, gmm_cfg_);
  prev_ = frame;
  if (!diff.fired && !gmm.fired) return std::nullopt;
  MotionEvent ev;
  ev.frame_index = index;
  ev.timestamp = t;
  ev.trigger = diff.fired && gmm.fired ? MotionTrigger::Both : (diff.fired ? MotionTrigger::Diff : MotionTrigger::Gmm);
  ev.mean_abs_diff = diff.mean_abs_diff;
  ev.foreground_ratio = gmm.foreground_ratio;
  return ev;
}

std::optional<MotionEvent> PirEdgeDetector::step(const PirSample& sample) {
  if (last_time_ && sample.timestamp <= *last_time_)
    throw std::invalid_argument("pir: timestamps must be strictly increasing");
  last_time_ = sample.timestamp;
  const long index = index_++;
  const bool rising = sample.presence && !last_;
  last_ = sample.presence;
  if (!rising) return std::nullopt;
  MotionEvent ev;
  ev.frame_index = index;
  ev.timestamp = sample.timestamp;
  ev.trigger = MotionTrigger::Pir;
  return ev;
}

void PirEdgeDetector::reset() {
  last_ = false;
  last_time_.reset();
  index_ = 0;
}

std::vector<MotionEvent> pir_source(const std::vector<PirSample>& schedule) {
  PirEdgeDetector edge;
  std::vector<MotionEvent> out;
  for (const auto& s : schedule) {
    if (auto ev = edge.step(s)) out.push_back(*ev);
  }
  return out;
}

}  // namespace trapkit
