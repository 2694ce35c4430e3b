#include "fakeshield/mmtd/description.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <vector>

namespace fakeshield::mmtd {

namespace {

constexpr std::array<std::string_view, 3> kHeaders{"VERDICT:", "LOCATION:", "BASIS:"};

constexpr std::array<std::string_view, 8> kAbsoluteTerms{
    "top", "bottom", "left", "right", "center", "centre", "corner", "middle"};

constexpr std::array<std::string_view, 14> kRelativePhrases{
    "above", "below", "under", "beneath", "on the", "on top of", "next to",
    "beside", "near", "behind", "in front of", "around", "between", "along"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string_view> split_lines(std::string_view raw) {
  std::vector<std::string_view> lines;
  size_t start = 0;
  while (start <= raw.size()) {
    const size_t nl = raw.find('\n', start);
    const size_t end = nl == std::string_view::npos ? raw.size() : nl;
    std::string_view line = raw.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return lines;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Whole-word (or whole-phrase) containment on lower-cased text.
bool contains_term(const std::string& text, std::string_view term) {
  size_t pos = 0;
  while ((pos = text.find(term, pos)) != std::string::npos) {
    const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
    const size_t end = pos + term.size();
    // Allow simple plural/adjectival endings: "corners", "lefthand" are not
    // expected, but "top-left" splits on '-'.
    const bool right_ok = end >= text.size() || !is_word_char(text[end]) || text[end] == 's';
    if (left_ok && right_ok) return true;
    pos = end;
  }
  return false;
}

}  // namespace

std::string_view verdict_name(Verdict v) { return v == Verdict::tampered ? "tampered" : "authentic"; }

StructuredDescription parse_description(std::string_view raw) {
  const auto lines = split_lines(raw);
  std::array<size_t, 3> at{};
  size_t from = 0;
  for (size_t h = 0; h < kHeaders.size(); ++h) {
    size_t found = lines.size();
    for (size_t i = from; i < lines.size(); ++i) {
      if (lines[i].starts_with(kHeaders[h])) {
        found = i;
        break;
      }
    }
    if (found == lines.size()) {
      const std::string name(kHeaders[h].substr(0, kHeaders[h].size() - 1));
      throw ParseError(name, "missing " + name + " section");
    }
    at[h] = found;
    from = found + 1;
  }
  auto body = [&](size_t h) {
    const size_t first = at[h];
    const size_t last = h + 1 < at.size() ? at[h + 1] : lines.size();
    std::string text(lines[first].substr(kHeaders[h].size()));
    for (size_t i = first + 1; i < last; ++i) {
      text += '\n';
      text += lines[i];
    }
    return std::string(trim(text));
  };

  StructuredDescription d;
  const std::string verdict = lower(body(0));
  if (verdict == "tampered") {
    d.verdict = Verdict::tampered;
  } else if (verdict == "authentic") {
    d.verdict = Verdict::authentic;
  } else {
    throw ParseError("VERDICT", "verdict must be 'tampered' or 'authentic', got '" + verdict + "'");
  }
  d.location_text = body(1);
  d.basis_text = body(2);
  return d;
}

std::string serialize_description(const StructuredDescription& d) {
  std::string out = "VERDICT: ";
  out += verdict_name(d.verdict);
  out += "\nLOCATION: ";
  out += d.location_text;
  out += "\nBASIS: ";
  out += d.basis_text;
  return out;
}

bool mentions_position(std::string_view location_text) {
  const std::string text = lower(location_text);
  for (auto t : kAbsoluteTerms) {
    if (contains_term(text, t)) return true;
  }
  for (auto p : kRelativePhrases) {
    if (contains_term(text, p)) return true;
  }
  return false;
}

std::string validate_description(const StructuredDescription& d, bool authentic) {
  if (authentic && d.verdict != Verdict::authentic) return "authentic image described as tampered";
  if (!authentic && d.verdict != Verdict::tampered) return "tampered image described as authentic";
  if (trim(d.basis_text).empty()) return "empty judgment basis";
  if (!authentic) {
    if (trim(d.location_text).empty()) return "empty location description";
    if (!mentions_position(d.location_text)) return "location names no absolute or relative position";
  }
  return {};
}

void to_json(nlohmann::json& j, const StructuredDescription& d) {
  j = {{"verdict", verdict_name(d.verdict)},
       {"location_text", d.location_text},
       {"basis_text", d.basis_text}};
}

void from_json(const nlohmann::json& j, StructuredDescription& d) {
  const auto v = j.at("verdict").get<std::string>();
  if (v == "tampered") {
    d.verdict = Verdict::tampered;
  } else if (v == "authentic") {
    d.verdict = Verdict::authentic;
  } else {
    throw ParseError("VERDICT", "bad verdict in record: " + v);
  }
  d.location_text = j.at("location_text").get<std::string>();
  d.basis_text = j.at("basis_text").get<std::string>();
}

}  // namespace fakeshield::mmtd
