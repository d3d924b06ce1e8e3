#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "flava/annotation.hpp"
#include "flava/geometry.hpp"
#include "flava/kitti_io.hpp"

#ifndef FLAVA_TEST_DATA_DIR
#define FLAVA_TEST_DATA_DIR "tests/data"
#endif

namespace fixture {

namespace fs = std::filesystem;
using flava::Box3D;
using flava::Category;

inline fs::path data_path(const std::string& name) { return fs::path(FLAVA_TEST_DATA_DIR) / name; }

inline flava::Calibration kitti_calibration() { return flava::load_calibration(data_path("kitti_calib_000000.txt")); }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() / fmt::format("flava-test-{:08x}-{}", rd(), counter++);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline Box3D random_box(std::mt19937_64& rng, Category category = Category::Car, int track_id = 0) {
  Box3D b;
  b.center = {uniform(rng, -30, 30), uniform(rng, -30, 30), uniform(rng, -2, 1)};
  b.size = {uniform(rng, 0.5, 6), uniform(rng, 0.4, 3), uniform(rng, 0.5, 3)};
  b.yaw = flava::normalize_angle(uniform(rng, -4, 4));
  b.category = category;
  b.track_id = track_id;
  return b;
}

inline flava::PointCloud random_cloud(std::mt19937_64& rng, std::size_t n, double extent = 40.0) {
  flava::PointCloud cloud;
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    cloud.points.push_back({static_cast<float>(uniform(rng, -extent, extent)),
                            static_cast<float>(uniform(rng, -extent, extent)),
                            static_cast<float>(uniform(rng, -3, 2)), static_cast<float>(uniform(rng, 0, 1))});
  }
  return cloud;
}

/// Writes <dir>/calib.txt and velodyne/<000000+i>.bin for each cloud.
inline void write_sequence(const fs::path& dir, const flava::Calibration& calib,
                           const std::vector<flava::PointCloud>& clouds, bool with_images = false) {
  fs::create_directories(dir / "velodyne");
  {
    std::ofstream out(dir / "calib.txt");
    out << flava::format_calibration(calib);
  }
  if (with_images) fs::create_directories(dir / "image_02");
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    const std::string stem = fmt::format("{:06d}", i);
    flava::save_point_cloud(clouds[i], dir / "velodyne" / (stem + ".bin"));
    if (with_images) {
      std::ofstream img(dir / "image_02" / (stem + ".png"), std::ios::binary);
      img << "\x89PNG fake image " << i;
    }
  }
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fixture
