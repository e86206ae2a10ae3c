#include "trapkit/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace trapkit {

namespace {

constexpr double kPi = std::numbers::pi;
double rad(double d) { return d * kPi / 180.0; }

// Deer > boar > fox > hare by silhouette area.
constexpr ClassShape kShapes[kNumClasses] = {
    // body_len body_h leg   leg_w head_r neck  tail  ears  power albedo  scale range
    {1.30, 0.55, 0.75, 0.09, 0.15, 0.28, 0.10, 0.00, 2.2, 0.58, 0.85, 1.15},  // deer
    {1.10, 0.60, 0.32, 0.11, 0.20, 0.00, 0.06, 0.00, 2.8, 0.32, 0.85, 1.15},  // boar
    {0.45, 0.24, 0.10, 0.05, 0.08, 0.04, 0.00, 0.13, 2.0, 0.50, 0.85, 1.15},  // hare
    {0.62, 0.24, 0.26, 0.05, 0.10, 0.06, 0.40, 0.05, 2.0, 0.68, 0.85, 1.15},  // fox
};

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double hash_unit(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  const std::uint64_t h = splitmix(splitmix(splitmix(a) ^ b) ^ c);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double hash_gauss(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  const double u1 = std::max(hash_unit(a, b, c * 2 + 0), 1e-300);
  const double u2 = hash_unit(a, b, c * 2 + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}
  double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double uniform(const Range& r) { return r.lo == r.hi ? r.lo : r.lo + (r.hi - r.lo) * unit(); }
  int integer(int lo, int hi) { return lo + static_cast<int>(unit() * (hi - lo + 1)); }
  std::uint64_t raw() { return rng_(); }

 private:
  std::mt19937_64 rng_;
};

struct Vec3 {
  double x, y, z;
};

Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

struct CameraFrame {
  double focal;
  double cx, cy;
  double height;
  Vec3 forward, up, right;

  explicit CameraFrame(const CameraSpec& c)
      : focal(c.focal_px()),
        cx(c.width / 2.0),
        cy(c.height / 2.0),
        height(c.height_m),
        forward{0.0, -std::sin(rad(c.pitch_deg)), std::cos(rad(c.pitch_deg))},
        up{0.0, std::cos(rad(c.pitch_deg)), std::sin(rad(c.pitch_deg))},
        right{1.0, 0.0, 0.0} {}

  // Ray direction with unit component along the optical axis, so the ray parameter is camera depth.
  Vec3 ray(int px, int py) const {
    const double xc = (px + 0.5 - cx) / focal;
    const double yc = -(py + 0.5 - cy) / focal;
    return forward + xc * right + yc * up;
  }

  // Returns (u, v, depth) in pixels/metres.
  std::optional<std::array<double, 3>> project(Vec3 world) const {
    const Vec3 p{world.x, world.y - height, world.z};
    const double zc = dot(p, forward);
    if (zc <= 1e-6) return std::nullopt;
    return std::array<double, 3>{cx + focal * dot(p, right) / zc, cy - focal * dot(p, up) / zc, zc};
  }
};

double segment_distance(double px, double py, double ax, double ay, double bx, double by, double& along) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  along = t;
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

struct SurfaceHit {
  double nu = 0.0;  // local normal components in the billboard plane
  double nv = 0.0;
};

// Articulated silhouette in the billboard plane: u lateral (metres, right positive), v height above ground.
class Silhouette {
 public:
  explicit Silhouette(const AnimalSpec& a) {
    const ClassShape& s = class_shape(a.cls);
    const double k = a.scale;
    const double sn = std::sin(rad(a.heading_deg));
    // Broadside (heading 90/270) shows the full length; head-on views are foreshortened.
    fs_ = std::max(0.35, std::abs(sn));
    facing_ = sn >= 0 ? 1.0 : -1.0;
    x0_ = a.x_m;
    body_a_ = s.body_length * k * 0.5 * fs_;
    body_b_ = s.body_height * k * 0.5;
    leg_ = s.leg_length * k;
    leg_w_ = s.leg_width * k;
    power_ = s.superellipse_power;
    body_cv_ = leg_ + body_b_;
    head_r_ = s.head_radius * k;
    head_cu_ = facing_ * (body_a_ + head_r_ * 0.5 * std::max(fs_, 0.6));
    head_cv_ = leg_ + 2.0 * body_b_ * 0.8 + s.neck_height * k;
    neck_ = s.neck_height * k;
    tail_ = s.tail_length * k * fs_;
    ear_ = s.ear_length * k;
    const double hip_v = leg_ + body_b_ * 0.6;
    const double offsets[4] = {0.75, 0.45, -0.5, -0.8};
    for (int i = 0; i < 4; ++i) {
      const double swing = 0.35 * std::sin(2.0 * kPi * (a.gait_phase + 0.25 * i + 0.5 * (i % 2)));
      const double hu = facing_ * offsets[i] * body_a_;
      const double len = hip_v;
      legs_[i] = {hu, hip_v, hu + std::sin(swing) * len * fs_, hip_v - std::cos(swing) * len};
    }
    extent_u_ = body_a_ + std::max(head_r_ * 1.6, tail_) + 0.1 * k;
    extent_v_ = head_cv_ + head_r_ + ear_ + 0.05 * k;
  }

  double extent_u() const { return extent_u_; }
  double extent_v() const { return extent_v_; }

  std::optional<SurfaceHit> hit(double wx, double v) const {
    const double u = wx - x0_;
    if (v < 0.0 || std::abs(u) > extent_u_ || v > extent_v_) return std::nullopt;

    const double du = u / body_a_;
    const double dv = (v - body_cv_) / body_b_;
    if (std::pow(std::abs(du), power_) + std::pow(std::abs(dv), power_) <= 1.0) return SurfaceHit{0.7 * du, 0.7 * dv};

    const double hu = (u - head_cu_) / (head_r_ * std::max(fs_, 0.6));
    const double hv = (v - head_cv_) / head_r_;
    if (hu * hu + hv * hv <= 1.0) return SurfaceHit{0.6 * hu, 0.6 * hv};

    double along = 0.0;
    if (neck_ > 0.0) {
      const double nu0 = facing_ * body_a_ * 0.7;
      const double d = segment_distance(u, v, nu0, body_cv_ + body_b_ * 0.3, head_cu_, head_cv_, along);
      if (d <= head_r_ * 0.55) return SurfaceHit{0.0, 0.2};
    }
    for (const auto& leg : legs_) {
      const double d = segment_distance(u, v, leg[0], leg[1], leg[2], leg[3], along);
      if (d <= leg_w_ * 0.5) return SurfaceHit{0.3 * (u - leg[0]) / leg_w_, -0.2};
    }
    if (tail_ > 0.0) {
      const double tu0 = -facing_ * body_a_ * 0.9;
      const double tv0 = body_cv_ + body_b_ * 0.3;
      const double d = segment_distance(u, v, tu0, tv0, tu0 - facing_ * tail_, tv0 - body_b_ * 0.8, along);
      if (d <= body_b_ * (0.45 - 0.25 * along)) return SurfaceHit{0.0, 0.3};
    }
    if (ear_ > 0.0) {
      const double top = head_cv_ + head_r_ * 0.6;
      for (double side : {-0.35, 0.35}) {
        const double eu = head_cu_ + side * head_r_;
        const double d = segment_distance(u, v, eu, top, eu - facing_ * 0.25 * ear_, top + ear_, along);
        if (d <= head_r_ * 0.25) return SurfaceHit{0.0, 0.4};
      }
    }
    return std::nullopt;
  }

 private:
  double fs_ = 1.0, facing_ = 1.0, x0_ = 0.0;
  double body_a_ = 0.0, body_b_ = 0.0, body_cv_ = 0.0, power_ = 2.0;
  double leg_ = 0.0, leg_w_ = 0.0;
  double head_r_ = 0.0, head_cu_ = 0.0, head_cv_ = 0.0, neck_ = 0.0;
  double tail_ = 0.0, ear_ = 0.0;
  double extent_u_ = 0.0, extent_v_ = 0.0;
  std::array<std::array<double, 4>, 4> legs_{};
};

double ground_luminance(const SceneSpec& spec, int px, int py, bool sky) {
  const double scale = spec.illumination.intensity_scale;
  if (sky) return std::min(255.0, spec.background_mean * 1.3 * scale) + 3.0 * (hash_unit(spec.background_seed, px, py + 7919) - 0.5);
  // Two-octave value noise plus a fine grain.
  double tex = 0.0;
  double amp = 22.0;
  for (int octave = 0; octave < 2; ++octave) {
    const int cell = octave == 0 ? 8 : 3;
    const double gx = static_cast<double>(px) / cell;
    const double gy = static_cast<double>(py) / cell;
    const int ix = static_cast<int>(std::floor(gx));
    const int iy = static_cast<int>(std::floor(gy));
    const double fx = gx - ix, fy = gy - iy;
    auto corner = [&](int cx, int cy) {
      return 2.0 * hash_unit(spec.background_seed + static_cast<std::uint64_t>(octave) * 1000003ULL,
                             static_cast<std::uint64_t>(cx + 4096), static_cast<std::uint64_t>(cy + 4096)) - 1.0;
    };
    const double top = corner(ix, iy) * (1 - fx) + corner(ix + 1, iy) * fx;
    const double bot = corner(ix, iy + 1) * (1 - fx) + corner(ix + 1, iy + 1) * fx;
    tex += amp * (top * (1 - fy) + bot * fy);
    amp *= 0.6;
  }
  tex += 10.0 * (hash_unit(spec.background_seed ^ 0x5bd1e995ULL, px, py) - 0.5);
  const double light = 0.75 + 0.25 * std::sin(rad(spec.illumination.elevation_deg));
  return spec.background_mean * scale * light + tex;
}

std::uint16_t to_level(double units) {
  return static_cast<std::uint16_t>(std::lround(std::clamp(units, 0.0, 255.0) * kLevelsPerUnit));
}

}  // namespace

double CameraSpec::focal_px() const { return (width / 2.0) / std::tan(rad(fov_deg) / 2.0); }

void CameraSpec::validate() const {
  if (!(fov_deg > 10.0 && fov_deg < 120.0)) throw std::invalid_argument("camera: fov must be in (10,120)");
  if (!(height_m > 0.0)) throw std::invalid_argument("camera: height must be positive");
  if (width < 1 || height < 1) throw std::invalid_argument("camera: bad image size");
  if (!(pitch_deg > -60.0 && pitch_deg < 80.0)) throw std::invalid_argument("camera: pitch out of range");
}

const ClassShape& class_shape(AnimalClass c) { return kShapes[static_cast<int>(c)]; }
const char* class_name(AnimalClass c) { return kClassNames[static_cast<int>(c)]; }

std::optional<BoundingBox> animal_footprint(const CameraSpec& cam, const AnimalSpec& animal) {
  const CameraFrame frame(cam);
  const Silhouette sil(animal);
  double u0 = std::numeric_limits<double>::infinity(), v0 = u0;
  double u1 = -u0, v1 = -u0;
  for (double du : {-sil.extent_u(), sil.extent_u()}) {
    for (double h : {0.0, sil.extent_v()}) {
      const auto p = frame.project({animal.x_m + du, h, animal.z_m});
      if (!p) return std::nullopt;
      u0 = std::min(u0, (*p)[0]);
      u1 = std::max(u1, (*p)[0]);
      v0 = std::min(v0, (*p)[1]);
      v1 = std::max(v1, (*p)[1]);
    }
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(u0)));
  const int y0 = std::max(0, static_cast<int>(std::floor(v0)));
  const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(u1)));
  const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(v1)));
  if (x1 < x0 || y1 < y0) return std::nullopt;
  return BoundingBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

SceneSpec sample_scene(std::uint64_t seed, const SceneRanges& r) {
  Sampler s(seed);
  SceneSpec spec;
  spec.seed = seed;
  spec.camera.height_m = s.uniform(r.camera_height_m);
  spec.camera.pitch_deg = s.uniform(r.pitch_deg);
  spec.camera.fov_deg = s.uniform(r.fov_deg);
  spec.camera.width = r.image_width;
  spec.camera.height = r.image_height;
  spec.camera.validate();
  spec.illumination.azimuth_deg = s.uniform(r.light_azimuth_deg);
  spec.illumination.elevation_deg = s.uniform(r.light_elevation_deg);
  spec.illumination.intensity_scale = s.uniform(r.intensity_scale);
  spec.background_seed = s.raw();
  spec.background_mean = s.uniform(r.background_mean);
  spec.camouflage = std::clamp(s.uniform(r.camouflage), 0.0, 1.0);

  double weight_total = 0.0;
  for (double w : r.class_weights) weight_total += w;
  if (!(weight_total > 0.0)) throw std::invalid_argument("sample_scene: class weights must not all be zero");

  const int count = s.integer(r.min_animals, r.max_animals);
  const double half_tan = std::tan(rad(spec.camera.fov_deg) / 2.0);
  std::vector<BoundingBox> placed;
  for (int i = 0; i < count; ++i) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      AnimalSpec a;
      double pick = s.unit() * weight_total;
      int cls = 0;
      while (cls < kNumClasses - 1 && pick >= r.class_weights[cls]) pick -= r.class_weights[cls++];
      a.cls = static_cast<AnimalClass>(cls);
      a.z_m = s.uniform(r.z_m);
      a.x_m = (2.0 * s.unit() - 1.0) * 0.7 * a.z_m * half_tan;
      a.heading_deg = s.uniform(r.heading_deg);
      const ClassShape& shape = class_shape(a.cls);
      a.scale = std::clamp(s.uniform(r.scale), shape.min_scale, shape.max_scale);
      a.gait_phase = std::fmod(s.unit(), 1.0);
      const auto fp = animal_footprint(spec.camera, a);
      if (!fp) continue;
      if (!r.allow_overlap) {
        BoundingBox grown{fp->x - r.separation_px, fp->y - r.separation_px, fp->w + 2 * r.separation_px,
                          fp->h + 2 * r.separation_px};
        const bool clash = std::any_of(placed.begin(), placed.end(), [&](const BoundingBox& b) { return bbox_iou(grown, b) > 0.0; });
        if (clash) continue;
      }
      placed.push_back(*fp);
      spec.animals.push_back(a);
      break;
    }
  }
  return spec;
}

RenderedFrame render_scene(const SceneSpec& spec) {
  spec.camera.validate();
  for (const auto& a : spec.animals) {
    if (!(a.z_m > 0.0)) throw std::invalid_argument("render_scene: animal behind the camera");
  }
  const int w = spec.camera.width;
  const int h = spec.camera.height;
  const CameraFrame cam(spec.camera);
  std::vector<Silhouette> sils;
  sils.reserve(spec.animals.size());
  for (const auto& a : spec.animals) sils.emplace_back(a);

  const double el = rad(spec.illumination.elevation_deg);
  const double az = rad(spec.illumination.azimuth_deg);
  const Vec3 light{std::sin(az) * std::cos(el), std::sin(el), -std::cos(az) * std::cos(el)};
  const double camo = std::clamp(spec.camouflage, 0.0, 1.0);

  RenderedFrame f{IntensityImage(w, h, 0), DepthMap(w, h, 0), Raster<std::uint8_t>(w, h, 0),
                  Raster<std::uint16_t>(w, h, 0)};
  std::vector<int> provisional(static_cast<std::size_t>(w) * h, -1);

  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const Vec3 dir = cam.ray(px, py);
      double best_t = std::numeric_limits<double>::infinity();
      const bool sky = dir.y >= -1e-9;
      if (!sky) best_t = cam.height / -dir.y;
      int winner = -1;
      SurfaceHit winner_hit;
      if (dir.z > 1e-9) {
        for (std::size_t k = 0; k < sils.size(); ++k) {
          const double t = spec.animals[k].z_m / dir.z;
          if (!(t < best_t)) continue;
          const double wx = t * dir.x;
          const double wy = cam.height + t * dir.y;
          if (auto hit = sils[k].hit(wx, wy)) {
            best_t = t;
            winner = static_cast<int>(k);
            winner_hit = *hit;
          }
        }
      }
      const double bg = ground_luminance(spec, px, py, sky);
      double lum = bg;
      if (winner >= 0) {
        const AnimalSpec& a = spec.animals[static_cast<std::size_t>(winner)];
        const double nu = std::clamp(winner_hit.nu, -0.95, 0.95);
        const double nv = std::clamp(winner_hit.nv, -0.95, 0.95);
        const double nz = std::sqrt(std::max(0.05, 1.0 - nu * nu - nv * nv));
        const double norm = std::sqrt(nu * nu + nv * nv + nz * nz);
        const Vec3 n{nu / norm, nv / norm, -nz / norm};
        const double shade = 0.35 + 0.65 * std::max(0.0, dot(n, light));
        const double fur = 8.0 * (hash_unit(spec.seed + 17, static_cast<std::uint64_t>(px), static_cast<std::uint64_t>(py) * 131 + winner) - 0.5);
        const double animal = class_shape(a.cls).albedo * 255.0 * shade * spec.illumination.intensity_scale + fur;
        lum = (1.0 - camo) * animal + camo * bg;
      }
      lum += 1.5 * hash_gauss(spec.seed, static_cast<std::uint64_t>(px), static_cast<std::uint64_t>(py));
      const std::size_t i = static_cast<std::size_t>(py) * w + px;
      f.intensity[i] = to_level(lum);
      if (std::isfinite(best_t)) {
        const double mm = std::round(best_t * 1000.0);
        f.depth[i] = mm <= 65535.0 ? static_cast<std::uint16_t>(mm) : 0;
      }
      provisional[i] = winner;
    }
  }

  // Instance ids are consecutive over the animals that ended up visible.
  std::vector<int> remap(spec.animals.size(), 0);
  for (int p : provisional) {
    if (p >= 0) remap[static_cast<std::size_t>(p)] = 1;
  }
  int next = 1;
  for (auto& id : remap) id = id ? next++ : 0;
  for (std::size_t i = 0; i < provisional.size(); ++i) {
    const int p = provisional[i];
    if (p < 0) continue;
    f.instance_map[i] = static_cast<std::uint16_t>(remap[static_cast<std::size_t>(p)]);
    f.class_map[i] = static_cast<std::uint8_t>(static_cast<int>(spec.animals[static_cast<std::size_t>(p)].cls) + 1);
  }
  return f;
}

std::vector<LabeledInstance> derive_annotations(const RenderedFrame& f) {
  const int w = f.instance_map.width();
  const int h = f.instance_map.height();
  int max_id = 0;
  for (auto id : f.instance_map.data()) max_id = std::max<int>(max_id, id);
  std::vector<BinaryMask> masks(static_cast<std::size_t>(max_id), BinaryMask(w, h));
  std::vector<int> cls(static_cast<std::size_t>(max_id), -1);
  for (std::size_t i = 0; i < f.instance_map.size(); ++i) {
    const int id = f.instance_map[i];
    if (id == 0) continue;
    const int c = f.class_map[i];
    if (c == 0) throw std::runtime_error("derive_annotations: instance pixel without class");
    auto& slot = cls[static_cast<std::size_t>(id - 1)];
    if (slot >= 0 && slot != c - 1) throw std::runtime_error("derive_annotations: inconsistent class within instance");
    slot = c - 1;
    masks[static_cast<std::size_t>(id - 1)][i] = 1;
  }
  std::vector<LabeledInstance> out;
  for (int id = 0; id < max_id; ++id) {
    if (cls[static_cast<std::size_t>(id)] < 0) continue;
    out.push_back(make_instance(cls[static_cast<std::size_t>(id)], std::move(masks[static_cast<std::size_t>(id)])));
  }
  return out;
}

std::string check_frame_consistency(const RenderedFrame& f) {
  if (!f.intensity.same_shape(f.depth) || f.class_map.width() != f.intensity.width() || f.class_map.height() != f.intensity.height() ||
      f.instance_map.width() != f.intensity.width() || f.instance_map.height() != f.intensity.height())
    return "map dimensions differ";
  int max_id = 0;
  std::vector<int> seen_class;
  for (std::size_t i = 0; i < f.instance_map.size(); ++i) {
    const int id = f.instance_map[i];
    const int c = f.class_map[i];
    if ((id == 0) != (c == 0)) return "instance/class background disagree at pixel " + std::to_string(i);
    if (c > kNumClasses) return "class id out of range";
    if (id == 0) continue;
    if (f.depth[i] == 0) return "instance pixel without depth";
    max_id = std::max(max_id, id);
    if (static_cast<int>(seen_class.size()) < id) seen_class.resize(static_cast<std::size_t>(id), 0);
    int& slot = seen_class[static_cast<std::size_t>(id - 1)];
    if (slot != 0 && slot != c) return "instance with mixed classes";
    slot = c;
  }
  for (int id = 1; id <= max_id; ++id) {
    if (seen_class[static_cast<std::size_t>(id - 1)] == 0) return "instance ids not consecutive";
  }
  return {};
}

}  // namespace trapkit
