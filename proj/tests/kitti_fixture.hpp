#pragma once

// Builds a throwaway KITTI-odometry directory tree for tests: every sequence
// 00..21 gets the same calib.txt and a few small Velodyne scans.

#include <unistd.h>

#include <array>
#include <cstdint>
#include <cstdio>
#include <iterator>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace lsdcalib::testing {

namespace fs = std::filesystem;

inline std::string fixture_path(const std::string& name) { return std::string(LSDCALIB_FIXTURE_DIR) + "/" + name; }

inline std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

/// Little-endian float32 records (x, y, z, r).
inline void write_velodyne(const fs::path& path, const std::vector<std::array<float, 4>>& recs) {
  std::ofstream os(path, std::ios::binary);
  for (const auto& r : recs) {
    for (float f : r) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      const unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                                  static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
      os.write(reinterpret_cast<const char*>(b), 4);
    }
  }
}

/// Minimal PNG prefix: signature plus an IHDR chunk header with the size.
inline void write_png_header(const fs::path& path, std::uint32_t w, std::uint32_t h) {
  std::ofstream os(path, std::ios::binary);
  const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  os.write(reinterpret_cast<const char*>(sig), 8);
  const unsigned char len[4] = {0, 0, 0, 13};
  os.write(reinterpret_cast<const char*>(len), 4);
  os.write("IHDR", 4);
  for (std::uint32_t v : {w, h}) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
  }
  const unsigned char rest[9] = {8, 2, 0, 0, 0, 0, 0, 0, 0};
  os.write(reinterpret_cast<const char*>(rest), 9);
}

class KittiFixture {
 public:
  explicit KittiFixture(int frames_per_sequence = 3, int points_per_frame = 200) {
    static int counter = 0;
    root_ = fs::temp_directory_path() / ("lsdcalib-kitti-" + std::to_string(::getpid()) + "-" +
                                         std::to_string(counter++));
    const std::string calib = read_text(fixture_path("kitti_calib_00.txt"));
    std::mt19937 rng(7);
    std::uniform_real_distribution<float> fwd(5.0f, 40.0f), side(-8.0f, 8.0f), up(-1.5f, 1.0f), refl(0.0f, 1.0f);
    for (int s = 0; s <= 21; ++s) {
      char id[3];
      std::snprintf(id, sizeof(id), "%02d", s);
      const fs::path dir = root_ / "sequences" / id;
      fs::create_directories(dir / "velodyne");
      std::ofstream(dir / "calib.txt") << calib;
      for (int f = 0; f < frames_per_sequence; ++f) {
        char name[16];
        std::snprintf(name, sizeof(name), "%06d.bin", f);
        std::vector<std::array<float, 4>> recs;
        // Vary the size per frame so point counts are not all equal.
        for (int i = 0; i < points_per_frame + 7 * f + s; ++i) recs.push_back({fwd(rng), side(rng), up(rng), refl(rng)});
        write_velodyne(dir / "velodyne" / name, recs);
      }
    }
  }
  ~KittiFixture() {
    std::error_code ec;
    fs::remove_all(root_, ec);
  }
  KittiFixture(const KittiFixture&) = delete;
  KittiFixture& operator=(const KittiFixture&) = delete;

  const fs::path& root() const { return root_; }
  fs::path sequence(const std::string& id) const { return root_ / "sequences" / id; }

 private:
  fs::path root_;
};

}  // namespace lsdcalib::testing
