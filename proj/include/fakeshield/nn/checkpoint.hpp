#pragma once

#include "fakeshield/nn/tensor.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace fakeshield::nn {

// On-disk layout: the line "FSCKPT1\n", an 8-byte little-endian header
// length, a JSON header {meta, tensors: [{name, rows, cols}]}, then every
// tensor's values as little-endian float64 in header order.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Matrix>> tensors;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  const Matrix& tensor(const std::string& name) const;
};

}  // namespace fakeshield::nn
