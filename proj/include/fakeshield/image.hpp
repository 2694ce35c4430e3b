#pragma once

#include "fakeshield/nn/tensor.hpp"

#include <opencv2/core.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fakeshield {

using Bytes = std::vector<uint8_t>;

// Decodes PNG/JPEG/... bytes into an 8-bit 3-channel RGB image.
// Throws InputError on empty or undecodable input.
cv::Mat decode_image(std::span<const uint8_t> bytes);
cv::Mat read_image(const std::filesystem::path& path);
Bytes read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::span<const uint8_t> bytes);

// Lossless PNG of an RGB (3-channel) or single-channel 8/16-bit image.
Bytes encode_png(const cv::Mat& image);
Bytes encode_jpeg(const cv::Mat& rgb, int quality);

// Single-channel 8-bit mask; 255 = tampered, 0 = untouched. Any non-zero
// value is read as tampered.
cv::Mat read_mask(const std::filesystem::path& path);
cv::Mat decode_mask(std::span<const uint8_t> bytes);

// Resizes to size x size and returns [3, size*size] planar values scaled to
// roughly zero mean / unit range.
nn::Matrix image_to_planar(const cv::Mat& rgb, int size);

// {0,1} matrix [height, width] from a mask, nearest-neighbour resized.
nn::Matrix mask_to_matrix(const cv::Mat& mask, int height, int width);

}  // namespace fakeshield
