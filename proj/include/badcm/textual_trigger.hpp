#pragma once

// Textual trigger: replace the invariant keywords with synonyms whose sentence
// embedding approaches that of the rare-word poisoned text.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "badcm/datamodel.hpp"
#include "badcm/mining.hpp"
#include "badcm/surrogate.hpp"

namespace badcm {

struct TextPoisonConfig {
  std::string rare_word = "cf";
  int candidates = 64;
  double s_target = 0.7;
  /// Start s_best from the unmodified text's score instead of 0.
  bool init_from_unmodified = false;

  void validate() const;
  nlohmann::json to_json() const;
  static TextPoisonConfig from_json(const nlohmann::json& j);
};

struct SubstitutionStep {
  std::size_t position = 0;
  std::string original;
  std::string chosen;
  double score = 0.0;  // s_best after this keyword
};

struct SubstitutionTrace {
  std::vector<SubstitutionStep> steps;
  bool terminated_early = false;
  double s_best = 0.0;
};

/// Every keyword position replaced by `rare_word`. With no keywords the text is
/// returned unchanged and `*empty_selection` (when given) is set.
TextSample build_explicit_poison(const TextSample& text, const KeywordSelection& keywords, const std::string& rare_word,
                                 bool* empty_selection = nullptr);

struct TextPoisonResult {
  TextSample poisoned;
  SubstitutionTrace trace;
};

/// Greedy keyword-by-keyword synonym search. Keywords are visited in the
/// order given; each candidate is tried on top of the best text so far and
/// kept only on a strict score improvement. Returns as soon as s_best reaches s_target.
/// Throws UnpoisonableError when there are no keywords.
TextPoisonResult greedy_substitute(const TextSample& text, const KeywordSelection& keywords,
                                   const TextPoisonConfig& config, const TextEmbedder& embedder,
                                   const CandidateOracle& oracle);

struct TraceRecord {
  std::string id;
  SubstitutionTrace trace;
};

void write_traces(const std::filesystem::path& path, std::span<const TraceRecord> traces);
std::vector<TraceRecord> read_traces(const std::filesystem::path& path);

}  // namespace badcm
