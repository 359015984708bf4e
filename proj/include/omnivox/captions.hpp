#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cctype>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "omnivox/error.hpp"

namespace omnivox {

// Relevance, fluency, accuracy on a 1-5 scale.
struct CaptionScores {
  int relevance = 0;
  int fluency = 0;
  int accuracy = 0;

  std::array<int, 3> values() const { return {relevance, fluency, accuracy}; }
  int min() const { return std::min({relevance, fluency, accuracy}); }
  double mean() const { return (relevance + fluency + accuracy) / 3.0; }
  friend bool operator==(const CaptionScores&, const CaptionScores&) = default;
};

struct CandidateCaption {
  std::string media_id;
  std::string text;
  std::optional<CaptionScores> scores;
  bool accepted = false;
};

struct AcceptRule {
  int floor = 3;
  double mean = 4.0;

  bool accepts(const CaptionScores& s) const { return s.min() >= floor && s.mean() >= mean; }
};

using CaptionScorer = std::function<CaptionScores(const std::string& text)>;
using CaptionGenerator = std::function<std::vector<std::string>(const std::string& media_id, std::size_t k)>;

inline void check_scores(const CaptionScores& s, const std::string& text) {
  for (int v : s.values()) {
    if (v < 1 || v > 5) {
      throw ContractError("scorer returned " + std::to_string(v) + " outside 1..5 for caption '" + text + "'");
    }
  }
}

// Scores every candidate once, in input order, and sets the accepted flag.
inline std::vector<CandidateCaption> filter_captions(std::vector<CandidateCaption> candidates, const AcceptRule& rule,
                                                     const CaptionScorer& scorer) {
  for (auto& c : candidates) {
    const CaptionScores s = scorer(c.text);
    check_scores(s, c.text);
    c.scores = s;
    c.accepted = rule.accepts(s);
  }
  return candidates;
}

// Generate k candidates per media item, score them, keep the accepted ones.
inline std::vector<CandidateCaption> rejection_sample(const std::vector<std::string>& media_ids, std::size_t k,
                                                      const CaptionGenerator& generator, const AcceptRule& rule,
                                                      const CaptionScorer& scorer) {
  std::vector<CandidateCaption> pool;
  for (const auto& id : media_ids) {
    for (auto& text : generator(id, k)) pool.push_back({id, std::move(text), std::nullopt, false});
  }
  auto scored = filter_captions(std::move(pool), rule, scorer);
  std::erase_if(scored, [](const CandidateCaption& c) { return !c.accepted; });
  return scored;
}

// Rule-based stand-in for a model judge. Relevance counts clinical
// vocabulary, fluency looks at length and sentence shape, accuracy penalizes
// hedges and placeholder text.
class MockScorer {
 public:
  CaptionScores operator()(const std::string& text) const {
    const std::string lower = lowercase(text);
    const auto words = split_words(lower);

    int hits = 0;
    for (const char* kw : kClinical) hits += contains_word(words, kw) ? 1 : 0;
    const int relevance = std::clamp(1 + hits, 1, 5);

    int fluency = 1;
    if (words.size() >= 4) ++fluency;
    if (words.size() >= 8 && words.size() <= 60) ++fluency;
    if (!text.empty() && std::isupper(static_cast<unsigned char>(text.front()))) ++fluency;
    if (!text.empty() && (text.back() == '.' || text.back() == '!')) ++fluency;

    int accuracy = 5;
    for (const char* h : kHedges) accuracy -= contains_word(words, h) ? 1 : 0;
    if (lower.find("lorem") != std::string::npos || lower.find("todo") != std::string::npos) accuracy = 1;
    accuracy = std::clamp(accuracy, 1, 5);
    return {relevance, std::clamp(fluency, 1, 5), accuracy};
  }

 private:
  static constexpr const char* kClinical[] = {"surgical", "tissue",  "lesion",  "instrument", "grasper", "liver",
                                              "gallbladder", "ct",  "mri",     "slice",      "bleeding", "incision",
                                              "organ",    "endoscopic", "tumor", "scan"};
  static constexpr const char* kHedges[] = {"maybe", "possibly", "unclear", "something", "probably", "guess"};

  static std::string lowercase(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
  }

  static std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : s) {
      if (std::isalnum(c)) {
        cur.push_back(static_cast<char>(c));
      } else if (!cur.empty()) {
        out.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
  }

  static bool contains_word(const std::vector<std::string>& words, const char* w) {
    return std::find(words.begin(), words.end(), w) != words.end();
  }
};

// Templated candidate texts of uneven quality, deterministic in (id, k).
inline std::vector<std::string> mock_generate(const std::string& media_id, std::size_t k) {
  static const char* kTemplates[] = {
      "The surgical instrument grasps the gallbladder while tissue is retracted.",
      "maybe something happens here",
      "Endoscopic view showing bleeding near the incision and a grasper.",
      "A CT slice with a lesion in the liver.",
      "video of stuff probably",
      "The grasper retracts liver tissue to expose the gallbladder during the surgical procedure.",
  };
  constexpr std::size_t n = std::size(kTemplates);
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a, stable across platforms
  for (unsigned char c : media_id) h = (h ^ c) * 1099511628211ULL;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.emplace_back(kTemplates[(h + i) % n]);
  return out;
}

inline nlohmann::json to_json(const CandidateCaption& c) {
  nlohmann::json j = {{"media_id", c.media_id}, {"text", c.text}};
  if (c.scores) {
    j["scores"] = {{"relevance", c.scores->relevance}, {"fluency", c.scores->fluency}, {"accuracy", c.scores->accuracy}};
    j["accepted"] = c.accepted;
  }
  return j;
}

inline CandidateCaption caption_from_json(const nlohmann::json& j) {
  CandidateCaption c;
  c.media_id = j.at("media_id").get<std::string>();
  c.text = j.at("text").get<std::string>();
  if (j.contains("scores")) {
    const auto& s = j.at("scores");
    c.scores = CaptionScores{s.at("relevance").get<int>(), s.at("fluency").get<int>(), s.at("accuracy").get<int>()};
  }
  if (j.contains("accepted")) c.accepted = j.at("accepted").get<bool>();
  return c;
}

inline std::vector<CandidateCaption> read_captions_jsonl(std::istream& in) {
  std::vector<CandidateCaption> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(caption_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("captions line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_captions_jsonl(std::ostream& os, const std::vector<CandidateCaption>& caps) {
  for (const auto& c : caps) os << to_json(c).dump() << '\n';
}

}  // namespace omnivox
