#pragma once

#include <cstdint>

#include "trapkit/imaging.hpp"

namespace trapkit {

struct RectifiedPair {
  IntensityImage left;
  IntensityImage right;
  double baseline_m = 0.05;
  double focal_px = 600.0;

  void validate() const;
};

/// Left-referenced disparities. A left pixel at x corresponds to the right pixel at x - d.
struct DisparityMap {
  Raster<float> disparity;
  BinaryMask valid;

  int width() const { return disparity.width(); }
  int height() const { return disparity.height(); }
};

struct StereoConfig {
  int block_size = 7;
  int max_disparity = 64;
  double uniqueness_ratio = 0.8;
  double lr_consistency_tol = 1.0;
  double min_texture = 10.0;  // summed |horizontal gradient| over the block, luminance units

  void validate() const;
};

/// SAD block matching with winner-take-all, texture, uniqueness and left-right checks.
DisparityMap block_match(const RectifiedPair& pair, const StereoConfig& cfg);

/// depth_mm = round(1000 * focal * baseline / disparity); zero or invalid disparity and
/// depths beyond 65535 mm map to 0.
DepthMap disparity_to_depth(const DisparityMap& d, double baseline_m, double focal_px);

/// Adds a seeded sparse dot field (saturating). `amplitude` is in luminance units.
IntensityImage project_dot_pattern(const IntensityImage& img, std::uint64_t seed, double density, double amplitude);

/// Integer disparity for a depth sample; 0 for missing depth.
int depth_to_disparity(std::uint16_t depth_mm, double baseline_m, double focal_px);

/// Forward-warps the left view into the right camera, nearer surfaces winning. Holes take the
/// nearest filled pixel on the same scanline (the left one on ties).
IntensityImage synthesize_right_view(const IntensityImage& left, const DepthMap& depth, double baseline_m,
                                     double focal_px);

}  // namespace trapkit
