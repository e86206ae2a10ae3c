#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace trapkit {

/// Full-scale 16-bit levels per 8-bit-equivalent luminance unit (65535 / 255).
inline constexpr double kLevelsPerUnit = 257.0;

inline constexpr int kNumClasses = 4;
inline constexpr const char* kClassNames[kNumClasses] = {"deer", "boar", "hare", "fox"};

class ImagingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major raster with a fixed element type. Width and height are at least 1.
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width < 1 || height < 1) throw ImagingError("raster dimensions must be >= 1");
    data_.assign(static_cast<std::size_t>(width) * height, fill);
  }
  Raster(int width, int height, std::vector<T> data) : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1) throw ImagingError("raster dimensions must be >= 1");
    if (data_.size() != static_cast<std::size_t>(width) * height)
      throw ImagingError("raster pixel count does not match dimensions");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }

  template <typename U>
  bool same_shape(const Raster<U>& o) const { return width_ == o.width() && height_ == o.height(); }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// 16-bit luminance.
using IntensityImage = Raster<std::uint16_t>;
/// Millimetres; 0 marks missing depth.
using DepthMap = Raster<std::uint16_t>;

class BinaryMask : public Raster<std::uint8_t> {
 public:
  using Raster::Raster;
  BinaryMask(int width, int height) : Raster(width, height, std::uint8_t{0}) {}

  bool test(int x, int y) const { return at(x, y) != 0; }
  void set(int x, int y, bool v = true) { at(x, y) = v ? 1 : 0; }
  std::size_t count() const;
  bool any() const;
};

struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool valid() const { return w > 0 && h > 0; }
  long area() const { return static_cast<long>(w) * h; }
  bool contains(int px, int py) const { return px >= x && py >= y && px < x + w && py < y + h; }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct LabeledInstance {
  int class_id = 0;
  BoundingBox bbox;
  BinaryMask mask;
  std::optional<double> score;
};

/// Builds an instance from a mask, checking the class id and deriving the tight box.
LabeledInstance make_instance(int class_id, BinaryMask mask, std::optional<double> score = std::nullopt);

double bbox_iou(const BoundingBox& a, const BoundingBox& b);
double mask_iou(const BinaryMask& a, const BinaryMask& b);
BoundingBox bbox_from_mask(const BinaryMask& m);

/// 8-connected components ordered by their first pixel in row-major order.
std::vector<BinaryMask> connected_components(const BinaryMask& m);

/// Row-major run lengths; counts alternate starting with a (possibly empty) run of zeros.
struct RleRecord {
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> counts;
  friend bool operator==(const RleRecord&, const RleRecord&) = default;
};

RleRecord rle_encode(const BinaryMask& m);
BinaryMask rle_decode(const RleRecord& rle);

// Binary PGM (P5). 16-bit files are written big-endian with maxval 65535.
void write_pgm16(const std::filesystem::path& path, const Raster<std::uint16_t>& img);
Raster<std::uint16_t> read_pgm(const std::filesystem::path& path);
BinaryMask read_mask_pgm(const std::filesystem::path& path);

}  // namespace trapkit
