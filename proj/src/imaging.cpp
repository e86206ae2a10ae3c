#include "trapkit/imaging.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>

namespace trapkit {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(data().begin(), data().end(), [](std::uint8_t v) { return v != 0; }));
}

bool BinaryMask::any() const {
  return std::any_of(data().begin(), data().end(), [](std::uint8_t v) { return v != 0; });
}

LabeledInstance make_instance(int class_id, BinaryMask mask, std::optional<double> score) {
  if (class_id < 0 || class_id >= kNumClasses) throw ImagingError("class id out of range");
  LabeledInstance inst;
  inst.class_id = class_id;
  inst.bbox = bbox_from_mask(mask);
  inst.mask = std::move(mask);
  inst.score = score;
  return inst;
}

double bbox_iou(const BoundingBox& a, const BoundingBox& b) {
  const long ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const long iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const long inter = ix * iy;
  const long uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) throw ImagingError("mask_iou: dimension mismatch");
  std::size_t inter = 0;
  std::size_t uni = 0;
  const auto& da = a.data();
  const auto& db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const bool pa = da[i] != 0;
    const bool pb = db[i] != 0;
    inter += (pa && pb) ? 1 : 0;
    uni += (pa || pb) ? 1 : 0;
  }
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

BoundingBox bbox_from_mask(const BinaryMask& m) {
  int x0 = m.width(), y0 = m.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!m.test(x, y)) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) throw ImagingError("bbox_from_mask: empty mask");
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

std::vector<BinaryMask> connected_components(const BinaryMask& m) {
  std::vector<BinaryMask> out;
  if (m.empty()) return out;
  const int w = m.width();
  const int h = m.height();
  std::vector<std::uint8_t> seen(m.size(), 0);
  std::vector<int> stack;
  for (int start = 0; start < w * h; ++start) {
    if (!m[start] || seen[start]) continue;
    BinaryMask comp(w, h);
    stack.push_back(start);
    seen[start] = 1;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      comp[p] = 1;
      const int px = p % w;
      const int py = p / w;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = px + dx;
          const int ny = py + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const int q = ny * w + nx;
          if (m[q] && !seen[q]) {
            seen[q] = 1;
            stack.push_back(q);
          }
        }
      }
    }
    out.push_back(std::move(comp));
  }
  return out;
}

RleRecord rle_encode(const BinaryMask& m) {
  RleRecord rle;
  rle.height = m.height();
  rle.width = m.width();
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (const auto v : m.data()) {
    const std::uint8_t bit = v ? 1 : 0;
    if (bit != current) {
      rle.counts.push_back(run);
      current = bit;
      run = 0;
    }
    ++run;
  }
  rle.counts.push_back(run);
  return rle;
}

BinaryMask rle_decode(const RleRecord& rle) {
  if (rle.width < 1 || rle.height < 1) throw ImagingError("rle_decode: invalid size");
  const std::uint64_t total = std::accumulate(rle.counts.begin(), rle.counts.end(), std::uint64_t{0});
  if (total != static_cast<std::uint64_t>(rle.width) * rle.height)
    throw ImagingError("rle_decode: counts do not sum to width*height");
  BinaryMask m(rle.width, rle.height);
  std::size_t pos = 0;
  std::uint8_t bit = 0;
  for (const auto c : rle.counts) {
    if (bit) std::fill_n(m.data().begin() + static_cast<std::ptrdiff_t>(pos), c, std::uint8_t{1});
    pos += c;
    bit ^= 1;
  }
  return m;
}

void write_pgm16(const std::filesystem::path& path, const Raster<std::uint16_t>& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ImagingError("cannot open for writing: " + path.string());
  f << "P5\n" << img.width() << ' ' << img.height() << "\n65535\n";
  std::vector<char> buf(img.size() * 2);
  for (std::size_t i = 0; i < img.size(); ++i) {
    buf[2 * i] = static_cast<char>(img[i] >> 8);
    buf[2 * i + 1] = static_cast<char>(img[i] & 0xff);
  }
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw ImagingError("write failed: " + path.string());
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

}  // namespace

Raster<std::uint16_t> read_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ImagingError("cannot open: " + path.string());
  if (next_token(f) != "P5") throw ImagingError("not a binary PGM: " + path.string());
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(f));
    h = std::stoi(next_token(f));
    maxval = std::stoi(next_token(f));
  } catch (const std::exception&) {
    throw ImagingError("malformed PGM header: " + path.string());
  }
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) throw ImagingError("bad PGM header: " + path.string());
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<std::uint16_t> px(n);
  if (maxval < 256) {
    std::vector<unsigned char> buf(n);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (!f) throw ImagingError("truncated PGM: " + path.string());
    std::copy(buf.begin(), buf.end(), px.begin());
  } else {
    std::vector<unsigned char> buf(2 * n);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(2 * n));
    if (!f) throw ImagingError("truncated PGM: " + path.string());
    for (std::size_t i = 0; i < n; ++i) px[i] = static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
  }
  return {w, h, std::move(px)};
}

BinaryMask read_mask_pgm(const std::filesystem::path& path) {
  const auto img = read_pgm(path);
  BinaryMask m(img.width(), img.height());
  for (std::size_t i = 0; i < img.size(); ++i) m[i] = img[i] ? 1 : 0;
  return m;
}

}  // namespace trapkit
