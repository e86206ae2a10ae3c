#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "trapkit/imaging.hpp"

namespace test_support {

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("trapkit_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Number of set pixels 8-reachable from the first set pixel.
inline std::size_t flood_fill_count(const trapkit::BinaryMask& m) {
  std::vector<std::uint8_t> seen(m.size(), 0);
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < m.height() && stack.empty(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.test(x, y)) {
        stack.push_back({x, y});
        seen[static_cast<std::size_t>(y) * m.width() + x] = 1;
        break;
      }
  std::size_t n = 0;
  while (!stack.empty()) {
    auto [x, y] = stack.back();
    stack.pop_back();
    ++n;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx, ny = y + dy;
        if (!m.contains(nx, ny) || !m.test(nx, ny)) continue;
        auto& s = seen[static_cast<std::size_t>(ny) * m.width() + nx];
        if (!s) {
          s = 1;
          stack.push_back({nx, ny});
        }
      }
  }
  return n;
}

}  // namespace test_support
