#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace fakeshield {

std::string sha256_hex(std::span<const uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string base64_encode(std::span<const uint8_t> bytes);

}  // namespace fakeshield
