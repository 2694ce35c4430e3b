#pragma once

#include "fakeshield/image.hpp"

#include <opencv2/core.hpp>

#include <filesystem>
#include <random>
#include <string>

namespace testing_support {

inline std::filesystem::path source_dir() { return FAKESHIELD_SOURCE_DIR; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / (tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline cv::Mat noise_image(int size, unsigned seed) {
  cv::Mat img(size, size, CV_8UC3);
  cv::RNG rng(seed);
  rng.fill(img, cv::RNG::UNIFORM, 0, 256);
  return img;
}

// Square mask with the given corner and side, 255 inside.
inline cv::Mat square_mask(int size, int x, int y, int side) {
  cv::Mat m = cv::Mat::zeros(size, size, CV_8UC1);
  m(cv::Rect(x, y, side, side)).setTo(255);
  return m;
}

inline void write_png(const std::filesystem::path& p, const cv::Mat& m) {
  fakeshield::write_file_atomic(p, fakeshield::encode_png(m));
}

}  // namespace testing_support
