#include "trapkit/stereo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace trapkit {

void RectifiedPair::validate() const {
  if (!left.same_shape(right)) throw std::invalid_argument("stereo: left/right dimensions differ");
  if (!(baseline_m > 0.0)) throw std::invalid_argument("stereo: baseline must be positive");
  if (!(focal_px > 0.0)) throw std::invalid_argument("stereo: focal length must be positive");
}

void StereoConfig::validate() const {
  if (block_size < 3 || block_size % 2 == 0) throw std::invalid_argument("stereo: block_size must be odd and >= 3");
  if (max_disparity < 1) throw std::invalid_argument("stereo: max_disparity must be >= 1");
  if (!(uniqueness_ratio > 0.0)) throw std::invalid_argument("stereo: uniqueness_ratio must be positive");
  if (lr_consistency_tol < 0.0) throw std::invalid_argument("stereo: lr_consistency_tol must be >= 0");
}

namespace {

constexpr std::uint32_t kNoCost = std::numeric_limits<std::uint32_t>::max();

// Sum over a (2r+1)^2 window of a W x H plane; entries whose window leaves the plane are
// left untouched (the caller marks them as unusable).
void box_sum(const std::vector<std::uint32_t>& plane, int w, int h, int r, std::vector<std::uint32_t>& out) {
  std::vector<std::uint32_t> cols(static_cast<std::size_t>(w) * h, 0);
  for (int x = 0; x < w; ++x) {
    std::uint32_t acc = 0;
    for (int y = 0; y < h; ++y) {
      acc += plane[static_cast<std::size_t>(y) * w + x];
      if (y >= 2 * r + 1) acc -= plane[static_cast<std::size_t>(y - 2 * r - 1) * w + x];
      if (y >= 2 * r) cols[static_cast<std::size_t>(y - r) * w + x] = acc;
    }
  }
  for (int y = r; y < h - r; ++y) {
    std::uint32_t acc = 0;
    const std::size_t row = static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      acc += cols[row + x];
      if (x >= 2 * r + 1) acc -= cols[row + x - 2 * r - 1];
      if (x >= 2 * r) out[row + x - r] = acc;
    }
  }
}

}  // namespace

DisparityMap block_match(const RectifiedPair& pair, const StereoConfig& cfg) {
  pair.validate();
  cfg.validate();
  const int w = pair.left.width();
  const int h = pair.left.height();
  if (w < cfg.block_size + cfg.max_disparity) throw std::invalid_argument("stereo: image narrower than block_size + max_disparity");
  if (h < cfg.block_size) throw std::invalid_argument("stereo: image shorter than block_size");
  const int r = cfg.block_size / 2;
  const int nd = cfg.max_disparity + 1;
  const std::size_t n = static_cast<std::size_t>(w) * h;

  // cost[d][y*w + x]: SAD between the left block at x and the right block at x - d.
  std::vector<std::uint32_t> cost(static_cast<std::size_t>(nd) * n, kNoCost);
  std::vector<std::uint32_t> diff(n);
  std::vector<std::uint32_t> summed(n);
  for (int d = 0; d < nd; ++d) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        diff[i] = x >= d ? static_cast<std::uint32_t>(std::abs(static_cast<int>(pair.left[i]) - static_cast<int>(pair.right[i - d]))) : 0;
      }
    }
    box_sum(diff, w, h, r, summed);
    std::uint32_t* plane = &cost[static_cast<std::size_t>(d) * n];
    for (int y = r; y < h - r; ++y) {
      for (int x = r + d; x < w - r; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        plane[i] = summed[i];
      }
    }
  }

  // Texture: summed absolute horizontal gradient of the left image over the block.
  std::vector<std::uint32_t> grad(n, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x + 1 < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      grad[i] = static_cast<std::uint32_t>(std::abs(static_cast<int>(pair.left[i + 1]) - static_cast<int>(pair.left[i])));
    }
  }
  std::vector<std::uint32_t> texture(n, 0);
  box_sum(grad, w, h, r, texture);

  // Right-referenced winners for the consistency check.
  std::vector<int> right_best(n, -1);
  for (int y = r; y < h - r; ++y) {
    for (int xr = r; xr < w - r; ++xr) {
      std::uint32_t best = kNoCost;
      int best_d = -1;
      for (int d = 0; d < nd && xr + d < w - r; ++d) {
        const std::uint32_t c = cost[static_cast<std::size_t>(d) * n + static_cast<std::size_t>(y) * w + xr + d];
        if (c < best) {
          best = c;
          best_d = d;
        }
      }
      right_best[static_cast<std::size_t>(y) * w + xr] = best_d;
    }
  }

  DisparityMap out{Raster<float>(w, h, 0.0f), BinaryMask(w, h)};
  const double texture_threshold = cfg.min_texture * kLevelsPerUnit;
  for (int y = r; y < h - r; ++y) {
    for (int x = r; x < w - r; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (static_cast<double>(texture[i]) < texture_threshold) continue;
      std::uint32_t best = kNoCost;
      int best_d = -1;
      for (int d = 0; d < nd; ++d) {
        const std::uint32_t c = cost[static_cast<std::size_t>(d) * n + i];
        if (c < best) {
          best = c;
          best_d = d;
        }
      }
      if (best_d < 0) continue;
      std::uint32_t second = kNoCost;
      for (int d = 0; d < nd; ++d) {
        if (std::abs(d - best_d) <= 1) continue;
        second = std::min(second, cost[static_cast<std::size_t>(d) * n + i]);
      }
      if (second != kNoCost) {
        if (second == 0) continue;
        if (static_cast<double>(best) > cfg.uniqueness_ratio * static_cast<double>(second)) continue;
      }
      const int back = right_best[i - best_d];
      if (back < 0 || std::abs(back - best_d) > cfg.lr_consistency_tol) continue;
      out.disparity[i] = static_cast<float>(best_d);
      out.valid[i] = 1;
    }
  }
  return out;
}

DepthMap disparity_to_depth(const DisparityMap& d, double baseline_m, double focal_px) {
  if (!(baseline_m > 0.0) || !(focal_px > 0.0)) throw std::invalid_argument("disparity_to_depth: baseline and focal must be positive");
  DepthMap depth(d.width(), d.height(), 0);
  const double k = 1000.0 * focal_px * baseline_m;
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (!d.valid[i] || !(d.disparity[i] > 0.0f)) continue;
    const double mm = std::round(k / d.disparity[i]);
    if (mm > 65535.0 || mm < 1.0) continue;
    depth[i] = static_cast<std::uint16_t>(mm);
  }
  return depth;
}

IntensityImage project_dot_pattern(const IntensityImage& img, std::uint64_t seed, double density, double amplitude) {
  if (!(density >= 0.0 && density < 1.0)) throw std::invalid_argument("dot pattern: density must be in [0,1)");
  if (!(amplitude >= 0.0)) throw std::invalid_argument("dot pattern: amplitude must be >= 0");
  IntensityImage out = img;
  if (density == 0.0 || amplitude == 0.0) return out;
  std::mt19937_64 rng(seed);
  const int add = static_cast<int>(std::lround(amplitude * kLevelsPerUnit));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (u < density) out[i] = static_cast<std::uint16_t>(std::min(65535, out[i] + add));
  }
  return out;
}

int depth_to_disparity(std::uint16_t depth_mm, double baseline_m, double focal_px) {
  if (depth_mm == 0) return 0;
  return static_cast<int>(std::lround(focal_px * baseline_m * 1000.0 / depth_mm));
}

IntensityImage synthesize_right_view(const IntensityImage& left, const DepthMap& depth, double baseline_m,
                                     double focal_px) {
  if (!left.same_shape(depth)) throw std::invalid_argument("synthesize_right_view: dimension mismatch");
  if (!(baseline_m > 0.0) || !(focal_px > 0.0)) throw std::invalid_argument("synthesize_right_view: baseline and focal must be positive");
  const int w = left.width();
  const int h = left.height();
  IntensityImage out(w, h, 0);
  std::vector<int> zbuf(w);
  for (int y = 0; y < h; ++y) {
    std::fill(zbuf.begin(), zbuf.end(), -1);
    for (int x = 0; x < w; ++x) {
      const int d = depth_to_disparity(depth.at(x, y), baseline_m, focal_px);
      const int xr = x - d;
      if (xr < 0 || xr >= w) continue;
      if (d > zbuf[xr]) {
        zbuf[xr] = d;
        out.at(xr, y) = left.at(x, y);
      }
    }
    // Scanline hole filling from the nearest filled neighbour.
    int last_filled = -1;
    std::vector<int> left_src(w, -1);
    for (int x = 0; x < w; ++x) {
      if (zbuf[x] >= 0) last_filled = x;
      left_src[x] = last_filled;
    }
    int next_filled = -1;
    for (int x = w - 1; x >= 0; --x) {
      if (zbuf[x] >= 0) {
        next_filled = x;
        continue;
      }
      const int a = left_src[x];
      const int b = next_filled;
      int src;
      if (a < 0 && b < 0) {
        out.at(x, y) = left.at(x, y);
        continue;
      } else if (a < 0) {
        src = b;
      } else if (b < 0) {
        src = a;
      } else {
        src = (x - a) <= (b - x) ? a : b;
      }
      out.at(x, y) = out.at(src, y);
    }
  }
  return out;
}

}  // namespace trapkit
