#include "badcm/textual_trigger.hpp"

#include <fstream>

#include <spdlog/spdlog.h>

#include "badcm/error.hpp"

namespace badcm {

using nlohmann::json;

void TextPoisonConfig::validate() const {
  if (rare_word.empty()) throw ValidationError("text_poison.rare_word must not be empty");
  if (candidates < 1) throw ValidationError("text_poison.candidates must be >= 1");
  if (!(s_target > 0.0 && s_target <= 1.0)) throw ValidationError("text_poison.s_target must be in (0, 1]");
}

json TextPoisonConfig::to_json() const {
  return {{"rare_word", rare_word},
          {"candidates", candidates},
          {"s_target", s_target},
          {"init_from_unmodified", init_from_unmodified}};
}

TextPoisonConfig TextPoisonConfig::from_json(const json& j) {
  TextPoisonConfig c;
  c.rare_word = j.value("rare_word", c.rare_word);
  c.candidates = j.value("candidates", c.candidates);
  c.s_target = j.value("s_target", c.s_target);
  c.init_from_unmodified = j.value("init_from_unmodified", c.init_from_unmodified);
  return c;
}

namespace {

void check_positions(const TextSample& text, const KeywordSelection& keywords) {
  for (auto p : keywords.positions)
    if (p >= text.size()) throw ValidationError("keyword position " + std::to_string(p) + " outside text");
}

}  // namespace

TextSample build_explicit_poison(const TextSample& text, const KeywordSelection& keywords, const std::string& rare_word,
                                 bool* empty_selection) {
  check_positions(text, keywords);
  if (empty_selection) *empty_selection = keywords.positions.empty();
  if (keywords.positions.empty()) {
    spdlog::warn("build_explicit_poison: empty keyword selection, text left unchanged");
    return text;
  }
  std::map<std::size_t, std::string> repl;
  for (auto p : keywords.positions) repl[p] = rare_word;
  return text.with_replacements(repl);
}

TextPoisonResult greedy_substitute(const TextSample& text, const KeywordSelection& keywords,
                                   const TextPoisonConfig& config, const TextEmbedder& embedder,
                                   const CandidateOracle& oracle) {
  if (keywords.positions.empty()) throw UnpoisonableError("unpoisonable instance: no keywords in \"" + text.raw() + "\"");
  check_positions(text, keywords);
  const auto reference = embedder.embed_text(build_explicit_poison(text, keywords, config.rare_word));

  TextPoisonResult out{text, {}};
  auto& trace = out.trace;
  std::map<std::size_t, std::string> chosen;  // accepted substitutions, applied to the original text
  if (config.init_from_unmodified) {
    trace.s_best = cosine_similarity(embedder.embed_text(text), reference);
    if (trace.s_best >= config.s_target) {
      trace.terminated_early = true;
      return out;
    }
  }

  for (auto pos : keywords.positions) {
    const auto candidates = oracle.mask_candidates(out.poisoned, pos, config.candidates);
    bool accepted = false;
    for (const auto& word : candidates.words) {
      auto trial_map = chosen;
      trial_map[pos] = word;
      TextSample trial = text.with_replacements(trial_map);
      const double s = cosine_similarity(embedder.embed_text(trial), reference);
      if (s > trace.s_best) {
        trace.s_best = s;
        chosen = std::move(trial_map);
        out.poisoned = std::move(trial);
        accepted = true;
      }
      if (trace.s_best >= config.s_target) break;
    }
    if (accepted) trace.steps.push_back({pos, text.tokens()[pos], out.poisoned.tokens()[pos], trace.s_best});
    if (trace.s_best >= config.s_target) {
      trace.terminated_early = true;
      break;
    }
  }
  return out;
}

void write_traces(const std::filesystem::path& path, std::span<const TraceRecord> traces) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write traces: " + path.string());
  for (const auto& r : traces) {
    json steps = json::array();
    for (const auto& s : r.trace.steps)
      steps.push_back({{"position", s.position}, {"original", s.original}, {"chosen", s.chosen}, {"score", s.score}});
    out << json{{"id", r.id},
                {"steps", steps},
                {"s_best_final", r.trace.s_best},
                {"terminated_early", r.trace.terminated_early}}
               .dump()
        << '\n';
  }
}

std::vector<TraceRecord> read_traces(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open traces: " + path.string());
  std::vector<TraceRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      TraceRecord r;
      r.id = j.at("id").get<std::string>();
      for (const auto& s : j.at("steps"))
        r.trace.steps.push_back({s.at("position").get<std::size_t>(), s.at("original").get<std::string>(),
                                 s.at("chosen").get<std::string>(), s.at("score").get<double>()});
      r.trace.s_best = j.at("s_best_final").get<double>();
      r.trace.terminated_early = j.at("terminated_early").get<bool>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return out;
}

}  // namespace badcm
