#pragma once

// Word-frequency profile of explanation texts by part of speech.

#include <nlohmann/json.hpp>

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fakeshield::eval {

enum class Pos { noun, adjective, verb, other };
std::string_view pos_name(Pos p);

class PosTagger {
 public:
  virtual ~PosTagger() = default;
  virtual Pos tag(std::string_view lowercase_word) const = 0;
};

// Fixed lookup over forensic vocabulary; unknown words are Pos::other.
class LexiconTagger final : public PosTagger {
 public:
  LexiconTagger();
  explicit LexiconTagger(std::unordered_map<std::string, Pos> entries) : entries_(std::move(entries)) {}
  Pos tag(std::string_view lowercase_word) const override;

 private:
  std::unordered_map<std::string, Pos> entries_;
};

struct LexiconEntry {
  std::string word;
  Pos pos = Pos::other;
  int count = 0;
};

// Nouns and adjectives, most frequent first (ties alphabetical). `top_n` of
// 0 keeps everything.
std::vector<LexiconEntry> answer_lexicon_profile(const std::vector<std::string>& texts, const PosTagger& tagger,
                                                 size_t top_n = 0);

void to_json(nlohmann::json& j, const LexiconEntry& e);

}  // namespace fakeshield::eval
