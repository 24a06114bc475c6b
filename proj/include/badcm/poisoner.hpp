#pragma once

// Scenario-aware dataset poisoning: pick victims, inject the modality
// triggers, and relabel them with the target.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "badcm/datamodel.hpp"
#include "badcm/mining.hpp"
#include "badcm/textual_trigger.hpp"
#include "badcm/visual_trigger.hpp"

namespace badcm {

enum class AttackScenario { V2L, L2V, DualKey };
std::string to_string(AttackScenario s);
AttackScenario scenario_from_string(std::string_view s);
inline bool poisons_images(AttackScenario s) { return s != AttackScenario::L2V; }
inline bool poisons_text(AttackScenario s) { return s != AttackScenario::V2L; }

struct PoisonPlan {
  LabelVector target;
  double ratio = 0.05;
  std::uint64_t seed = 0;
  AttackScenario scenario = AttackScenario::V2L;
  std::vector<std::string> victim_ids;
  /// Remaining ids in draw order, used to replace unpoisonable victims.
  std::vector<std::string> reserve_ids;
};

std::size_t victim_count(std::size_t n, double ratio);

PoisonPlan plan_poison(const DatasetManifest& train, const LabelVector& target, double ratio, AttackScenario scenario,
                       std::uint64_t seed);

/// Label replacement: the result is `target`.
LabelVector flip_label(const LabelVector& y, const LabelVector& target);

struct PoisonOutput {
  DatasetManifest manifest;
  std::vector<PoisonRecord> records;  // sorted by id
  std::vector<TraceRecord> traces;    // sorted by id
  std::vector<std::string> replaced;  // planned victims swapped for reserves
};

/// `generator` may be null for text-only scenarios.
PoisonOutput apply_poison(const PoisonPlan& plan, const DatasetManifest& train,
                          const std::map<std::string, MiningRecord>& mining, const GeneratorNet* generator,
                          const TextPoisonConfig& text_config, const SurrogateSet& surrogates);

}  // namespace badcm
