#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fakeshield {

// Text <-> token ids. Special ids are fixed per tokenizer; the literal
// "<SEG>" in input text always maps to seg_id().
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<int> encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const int> ids) const = 0;
  virtual int vocab_size() const = 0;

  virtual int bos_id() const = 0;
  virtual int eos_id() const = 0;
  // Ends a user turn; the model's answer starts right after it.
  virtual int sep_id() const = 0;
  // Placeholder that marks where image tokens splice into the sequence.
  virtual int image_id() const = 0;
  virtual int seg_id() const = 0;
};

inline constexpr std::string_view kSegLiteral = "<SEG>";

// UTF-8 bytes map to ids 0..255; five special ids follow.
class ByteTokenizer final : public Tokenizer {
 public:
  std::vector<int> encode(std::string_view text) const override;
  std::string decode(std::span<const int> ids) const override;
  int vocab_size() const override { return 261; }

  int bos_id() const override { return 256; }
  int eos_id() const override { return 257; }
  int sep_id() const override { return 258; }
  int image_id() const override { return 259; }
  int seg_id() const override { return 260; }
};

// Replaces every ill-formed UTF-8 sequence with U+FFFD. Generated byte
// streams are not guaranteed to be valid text.
std::string sanitize_utf8(std::string_view bytes);

}  // namespace fakeshield
