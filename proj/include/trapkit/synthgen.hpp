#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trapkit/imaging.hpp"

namespace trapkit {

enum class AnimalClass : int { Deer = 0, Boar = 1, Hare = 2, Fox = 3 };

struct CameraSpec {
  double height_m = 1.5;
  double pitch_deg = 10.0;  // downward positive
  double fov_deg = 50.0;    // horizontal
  int width = 96;
  int height = 72;

  double focal_px() const;
  void validate() const;
  friend bool operator==(const CameraSpec&, const CameraSpec&) = default;
};

struct IlluminationSpec {
  double azimuth_deg = 0.0;  // 0 = light behind the camera, positive towards the right
  double elevation_deg = 45.0;
  double intensity_scale = 1.0;
  friend bool operator==(const IlluminationSpec&, const IlluminationSpec&) = default;
};

struct AnimalSpec {
  AnimalClass cls = AnimalClass::Deer;
  double x_m = 0.0;  // lateral ground position, right positive
  double z_m = 5.0;  // forward ground distance from the camera
  double heading_deg = 90.0;  // 90 = walking to the right, broadside to the camera
  double scale = 1.0;
  double gait_phase = 0.0;  // [0,1)
  friend bool operator==(const AnimalSpec&, const AnimalSpec&) = default;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  CameraSpec camera;
  IlluminationSpec illumination;
  std::vector<AnimalSpec> animals;
  std::uint64_t background_seed = 0;
  double background_mean = 100.0;  // luminance units
  double camouflage = 0.0;         // 0 = natural animal luminance, 1 = background luminance
  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Sampling ranges for sample_scene. Collapsing a range (lo == hi) pins the value.
struct SceneRanges {
  Range camera_height_m{1.0, 2.0};
  Range pitch_deg{6.0, 14.0};
  Range fov_deg{40.0, 60.0};
  int image_width = 96;
  int image_height = 72;
  Range light_azimuth_deg{-60.0, 60.0};
  Range light_elevation_deg{20.0, 70.0};
  Range intensity_scale{0.85, 1.15};
  int min_animals = 1;
  int max_animals = 3;
  Range z_m{2.5, 5.5};
  Range scale{0.85, 1.15};
  Range heading_deg{0.0, 360.0};
  Range background_mean{70.0, 130.0};
  Range camouflage{0.0, 0.0};
  /// Relative class frequencies (deer, boar, hare, fox), default proportional to a
  /// 2536 / 1212 / 934 / 410 instance mix.
  std::array<double, kNumClasses> class_weights{2536.0, 1212.0, 934.0, 410.0};
  /// When false, animals whose projected boxes (grown by separation_px) intersect are resampled.
  bool allow_overlap = false;
  int separation_px = 2;
};

/// Per-class silhouette geometry at scale 1, in metres.
struct ClassShape {
  double body_length;
  double body_height;
  double leg_length;
  double leg_width;
  double head_radius;
  double neck_height;
  double tail_length;
  double ear_length;
  double superellipse_power;
  double albedo;  // fraction of full scale
  double min_scale;
  double max_scale;
};

const ClassShape& class_shape(AnimalClass c);
const char* class_name(AnimalClass c);

struct RenderedFrame {
  IntensityImage intensity;
  DepthMap depth;
  Raster<std::uint8_t> class_map;      // 0 = background, otherwise class_id + 1
  Raster<std::uint16_t> instance_map;  // 0 = background, otherwise 1..N
};

SceneSpec sample_scene(std::uint64_t seed, const SceneRanges& ranges);

/// Projected bounding box of an animal's extent, clipped to the image; empty if off-screen.
std::optional<BoundingBox> animal_footprint(const CameraSpec& cam, const AnimalSpec& animal);

RenderedFrame render_scene(const SceneSpec& spec);

/// Ground truth instances in instance-id order.
std::vector<LabeledInstance> derive_annotations(const RenderedFrame& f);

/// Checks the cross-map invariants of a rendered frame; returns an empty string when they hold.
std::string check_frame_consistency(const RenderedFrame& f);

}  // namespace trapkit
