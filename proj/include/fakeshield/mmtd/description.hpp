#pragma once

#include <nlohmann/json.hpp>

#include <stdexcept>
#include <string>
#include <string_view>

namespace fakeshield::mmtd {

enum class Verdict { tampered, authentic };

std::string_view verdict_name(Verdict v);

// The three-part analysis: what was decided, where, and why.
struct StructuredDescription {
  Verdict verdict = Verdict::authentic;
  std::string location_text;
  std::string basis_text;

  bool operator==(const StructuredDescription&) const = default;
};

// Raised when one of the VERDICT/LOCATION/BASIS sections is absent or
// malformed; section() names the first offending one.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string section, const std::string& what)
      : std::runtime_error(what), section_(std::move(section)) {}
  const std::string& section() const { return section_; }

 private:
  std::string section_;
};

// Parses text made of lines starting "VERDICT:", "LOCATION:", "BASIS:" in
// that order. Lines before VERDICT are ignored; a section runs until the
// next header line. Section bodies are whitespace-trimmed.
StructuredDescription parse_description(std::string_view raw);
std::string serialize_description(const StructuredDescription& d);

// True when the text names an absolute position (top, bottom, left, right,
// center, corner) or uses a relative-position phrase (above, next to, ...).
bool mentions_position(std::string_view location_text);

// Empty when the description satisfies the record invariants for the given
// authenticity label; otherwise a reason suitable for a rejects log.
std::string validate_description(const StructuredDescription& d, bool authentic);

void to_json(nlohmann::json& j, const StructuredDescription& d);
void from_json(const nlohmann::json& j, StructuredDescription& d);

}  // namespace fakeshield::mmtd
