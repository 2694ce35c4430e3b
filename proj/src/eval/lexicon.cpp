#include "fakeshield/eval/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace fakeshield::eval {

std::string_view pos_name(Pos p) {
  switch (p) {
    case Pos::noun: return "noun";
    case Pos::adjective: return "adjective";
    case Pos::verb: return "verb";
    case Pos::other: return "other";
  }
  return "other";
}

LexiconTagger::LexiconTagger() {
  for (const char* w : {"edge", "edges", "lighting", "light", "texture", "textures", "resolution", "shadow", "shadows",
                        "boundary", "boundaries", "region", "regions", "area", "areas", "patch", "patches", "face",
                        "faces", "artifact", "artifacts", "artefact", "artefacts", "seam", "seams", "skin", "noise",
                        "color", "colour", "colors", "blur", "sharpness", "transition", "transitions", "mismatch",
                        "image", "picture", "background", "object", "objects", "scene", "surroundings", "perspective",
                        "reflection", "reflections", "contour", "contours", "detail", "details", "pixel", "pixels",
                        "corner", "center", "centre", "top", "bottom", "left", "right", "side", "eye", "eyes",
                        "mouth", "hair", "illumination", "contrast", "saturation", "tone", "grain", "pattern"}) {
    entries_.emplace(w, Pos::noun);
  }
  for (const char* w : {"smooth", "inconsistent", "consistent", "unnatural", "natural", "sharp", "soft", "blurry",
                        "blurred", "abrupt", "uneven", "irregular", "pasted", "foreign", "flat", "overly", "dark",
                        "bright", "distorted", "mismatched", "artificial", "regenerated", "visible", "obvious",
                        "whole", "different", "similar", "duplicated", "missing", "strange", "odd", "synthetic"}) {
    entries_.emplace(w, Pos::adjective);
  }
  for (const char* w : {"differs", "disagrees", "blending", "blended", "pasted", "edited", "altered", "removed",
                        "copied", "appears", "shows", "suggests", "indicates", "lacks", "contains"}) {
    entries_.emplace(w, Pos::verb);
  }
}

Pos LexiconTagger::tag(std::string_view w) const {
  const auto it = entries_.find(std::string(w));
  return it == entries_.end() ? Pos::other : it->second;
}

std::vector<LexiconEntry> answer_lexicon_profile(const std::vector<std::string>& texts, const PosTagger& tagger,
                                                 size_t top_n) {
  std::map<std::string, LexiconEntry> counts;
  for (const auto& text : texts) {
    std::string cur;
    auto flush = [&] {
      if (cur.empty()) return;
      const Pos p = tagger.tag(cur);
      if (p == Pos::noun || p == Pos::adjective) {
        auto& e = counts[cur];
        e.word = cur;
        e.pos = p;
        ++e.count;
      }
      cur.clear();
    };
    for (char c : text) {
      if (std::isalpha(static_cast<unsigned char>(c))) {
        cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      } else {
        flush();
      }
    }
    flush();
  }
  std::vector<LexiconEntry> out;
  for (auto& [w, e] : counts) out.push_back(std::move(e));
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.count > b.count; });
  if (top_n > 0 && out.size() > top_n) out.resize(top_n);
  return out;
}

void to_json(nlohmann::json& j, const LexiconEntry& e) {
  j = {{"word", e.word}, {"pos", pos_name(e.pos)}, {"count", e.count}};
}

}  // namespace fakeshield::eval
