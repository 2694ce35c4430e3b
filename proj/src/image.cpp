#include "fakeshield/image.hpp"

#include "fakeshield/errors.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <fmt/format.h>

#include <atomic>
#include <fstream>
#include <functional>
#include <thread>
#include <iterator>

namespace fakeshield {

cv::Mat decode_image(std::span<const uint8_t> bytes) {
  if (bytes.empty()) throw InputError("empty image payload");
  cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<uint8_t*>(bytes.data()));
  cv::Mat bgr = cv::imdecode(buf, cv::IMREAD_COLOR);
  if (bgr.empty()) throw InputError("image payload could not be decoded");
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Unique per writer so concurrent writes of the same path never share a
  // temporary file.
  static std::atomic<uint64_t> counter{0};
  auto tmp = path;
  tmp += fmt::format(".{}.{}.tmp", std::hash<std::thread::id>{}(std::this_thread::get_id()), counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw std::runtime_error("short write on " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

cv::Mat read_image(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  return decode_image(bytes);
}

Bytes encode_png(const cv::Mat& image) {
  cv::Mat out;
  if (image.channels() == 3) {
    cv::cvtColor(image, out, cv::COLOR_RGB2BGR);
  } else {
    out = image;
  }
  std::vector<uchar> buf;
  if (!cv::imencode(".png", out, buf, {cv::IMWRITE_PNG_COMPRESSION, 6})) {
    throw std::runtime_error("PNG encoding failed");
  }
  return Bytes(buf.begin(), buf.end());
}

Bytes encode_jpeg(const cv::Mat& rgb, int quality) {
  if (quality < 1 || quality > 100) {
    throw InputError("JPEG quality must be in 1..100, got " + std::to_string(quality));
  }
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  std::vector<uchar> buf;
  if (!cv::imencode(".jpg", bgr, buf, {cv::IMWRITE_JPEG_QUALITY, quality})) {
    throw std::runtime_error("JPEG encoding failed");
  }
  return Bytes(buf.begin(), buf.end());
}

cv::Mat decode_mask(std::span<const uint8_t> bytes) {
  if (bytes.empty()) throw InputError("empty mask payload");
  cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<uint8_t*>(bytes.data()));
  cv::Mat mask = cv::imdecode(buf, cv::IMREAD_GRAYSCALE);
  if (mask.empty()) throw InputError("mask payload could not be decoded");
  return mask;
}

cv::Mat read_mask(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  return decode_mask(bytes);
}

nn::Matrix image_to_planar(const cv::Mat& rgb, int size) {
  if (rgb.empty() || rgb.type() != CV_8UC3) throw InputError("expected an 8-bit RGB image");
  cv::Mat resized;
  const bool shrink = rgb.cols > size || rgb.rows > size;
  cv::resize(rgb, resized, cv::Size(size, size), 0, 0, shrink ? cv::INTER_AREA : cv::INTER_LINEAR);
  nn::Matrix out(3, static_cast<Eigen::Index>(size) * size);
  for (int y = 0; y < size; ++y) {
    const auto* row = resized.ptr<cv::Vec3b>(y);
    for (int x = 0; x < size; ++x) {
      for (int c = 0; c < 3; ++c) {
        out(c, y * size + x) = (row[x][c] / 255.0 - 0.5) * 4.0;
      }
    }
  }
  return out;
}

nn::Matrix mask_to_matrix(const cv::Mat& mask, int height, int width) {
  cv::Mat resized = mask;
  if (mask.rows != height || mask.cols != width) {
    cv::resize(mask, resized, cv::Size(width, height), 0, 0, cv::INTER_NEAREST);
  }
  nn::Matrix out(height, width);
  for (int y = 0; y < height; ++y) {
    const auto* row = resized.ptr<uint8_t>(y);
    for (int x = 0; x < width; ++x) out(y, x) = row[x] != 0 ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace fakeshield
