#include "fakeshield/tokenizer.hpp"

namespace fakeshield {

std::vector<int> ByteTokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, kSegLiteral.size(), kSegLiteral) == 0) {
      ids.push_back(seg_id());
      i += kSegLiteral.size();
    } else {
      ids.push_back(static_cast<unsigned char>(text[i]));
      ++i;
    }
  }
  return ids;
}

std::string ByteTokenizer::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id >= 0 && id < 256) {
      out.push_back(static_cast<char>(id));
    } else if (id == seg_id()) {
      out += kSegLiteral;
    }
    // bos/eos/sep/image placeholders carry no text.
  }
  return out;
}

std::string sanitize_utf8(std::string_view bytes) {
  static constexpr std::string_view kReplacement = "\xEF\xBF\xBD";
  std::string out;
  out.reserve(bytes.size());
  size_t i = 0;
  while (i < bytes.size()) {
    const auto b0 = static_cast<unsigned char>(bytes[i]);
    size_t len = 0;
    unsigned lo = 0x80, hi = 0xBF;
    if (b0 < 0x80) {
      len = 1;
    } else if (b0 >= 0xC2 && b0 <= 0xDF) {
      len = 2;
    } else if (b0 >= 0xE0 && b0 <= 0xEF) {
      len = 3;
      if (b0 == 0xE0) lo = 0xA0;
      if (b0 == 0xED) hi = 0x9F;
    } else if (b0 >= 0xF0 && b0 <= 0xF4) {
      len = 4;
      if (b0 == 0xF0) lo = 0x90;
      if (b0 == 0xF4) hi = 0x8F;
    }
    if (len == 0) {
      out += kReplacement;
      ++i;
      continue;
    }
    size_t ok = 1;
    for (; ok < len && i + ok < bytes.size(); ++ok) {
      const auto b = static_cast<unsigned char>(bytes[i + ok]);
      const unsigned l = ok == 1 ? lo : 0x80, h = ok == 1 ? hi : 0xBF;
      if (b < l || b > h) break;
    }
    if (ok == len) {
      out.append(bytes.substr(i, len));
    } else {
      out += kReplacement;
    }
    i += ok;
  }
  return out;
}

}  // namespace fakeshield
