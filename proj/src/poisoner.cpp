#include "badcm/poisoner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include <spdlog/spdlog.h>

#include "badcm/error.hpp"
#include "badcm/random.hpp"

namespace badcm {

std::string to_string(AttackScenario s) {
  switch (s) {
    case AttackScenario::V2L: return "V2L";
    case AttackScenario::L2V: return "L2V";
    case AttackScenario::DualKey: return "DualKey";
  }
  return "?";
}

AttackScenario scenario_from_string(std::string_view s) {
  if (s == "V2L") return AttackScenario::V2L;
  if (s == "L2V") return AttackScenario::L2V;
  if (s == "DualKey") return AttackScenario::DualKey;
  throw ValidationError("unknown scenario '" + std::string(s) + "' (expected V2L, L2V or DualKey)");
}

std::size_t victim_count(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

PoisonPlan plan_poison(const DatasetManifest& train, const LabelVector& target, double ratio, AttackScenario scenario,
                       std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("poison ratio must be in (0, 1)");
  if (target.popcount() != 1) throw ValidationError("target label must have exactly one bit set");
  if (target.size() != train.categories) throw ValidationError("target label width differs from dataset categories");
  const std::size_t count = victim_count(train.instances.size(), ratio);
  if (count == 0) throw ValidationError("ratio too small for dataset");

  std::vector<std::size_t> order(train.instances.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, fnv1a("poison-plan")));
  rng.shuffle(std::span(order));

  PoisonPlan plan{target, ratio, seed, scenario, {}, {}};
  for (std::size_t k = 0; k < order.size(); ++k)
    (k < count ? plan.victim_ids : plan.reserve_ids).push_back(train.instances[order[k]].id);
  return plan;
}

LabelVector flip_label(const LabelVector& y, const LabelVector& target) {
  if (target.popcount() != 1) throw ValidationError("target label must have exactly one bit set");
  if (y.size() != target.size()) throw ValidationError("label widths differ");
  return target;
}

namespace {

struct VictimResult {
  PairedInstance instance;
  PoisonRecord record;
  std::optional<TraceRecord> trace;
};

const MiningRecord& mining_for(const std::map<std::string, MiningRecord>& mining, const std::string& id) {
  const auto it = mining.find(id);
  if (it == mining.end()) throw ValidationError("mining sidecar has no record for victim '" + id + "'");
  return it->second;
}

VictimResult poison_one(const PoisonPlan& plan, const PairedInstance& inst, const MiningRecord& mined,
                        const GeneratorNet* generator, const TextPoisonConfig& text_config, const SurrogateSet& s) {
  VictimResult r{inst, {}, std::nullopt};
  r.record.id = inst.id;
  r.record.original_label = inst.label;
  r.record.assigned_label = flip_label(inst.label, plan.target);
  r.record.modality = plan.scenario == AttackScenario::V2L   ? Modality::Image
                      : plan.scenario == AttackScenario::L2V ? Modality::Text
                                                             : Modality::Both;
  if (poisons_text(plan.scenario)) {
    auto res = greedy_substitute(inst.text, mined.keywords, text_config, *s.text, *s.candidates);
    r.instance.text = std::move(res.poisoned);
    r.trace = TraceRecord{inst.id, std::move(res.trace)};
    r.record.trace_ref = inst.id;
  }
  if (poisons_images(plan.scenario)) {
    r.instance.image = ImageHandle(quantize_8bit(poison_image(*generator, inst.image.get(), mined.mask)));
    r.record.mask_ref = inst.id;
  }
  r.instance.label = r.record.assigned_label;
  return r;
}

}  // namespace

PoisonOutput apply_poison(const PoisonPlan& plan, const DatasetManifest& train,
                          const std::map<std::string, MiningRecord>& mining, const GeneratorNet* generator,
                          const TextPoisonConfig& text_config, const SurrogateSet& surrogates) {
  if (poisons_images(plan.scenario) && generator == nullptr)
    throw ValidationError("scenario " + to_string(plan.scenario) + " needs a trained generator");
  if (poisons_text(plan.scenario)) text_config.validate();

  std::vector<std::string> pending(plan.victim_ids);
  std::size_t next_reserve = 0;
  std::map<std::string, VictimResult> done;
  PoisonOutput out;

  // Victims are independent; unpoisonable ones are replaced by the next reserve id in draw order.
  while (!pending.empty()) {
    std::vector<std::string> retry;
    for (const auto& id : pending) {
      if (!train.contains(id)) throw ValidationError("victim '" + id + "' is not in the training split");
      try {
        done.emplace(id, poison_one(plan, train.find(id), mining_for(mining, id), generator, text_config, surrogates));
      } catch (const UnpoisonableError& e) {
        if (next_reserve >= plan.reserve_ids.size())
          throw UnpoisonableError("no poisonable instances left to replace '" + id + "'");
        spdlog::info("victim {} unpoisonable ({}), replaced by {}", id, e.what(), plan.reserve_ids[next_reserve]);
        out.replaced.push_back(id);
        retry.push_back(plan.reserve_ids[next_reserve++]);
      }
    }
    pending = std::move(retry);
  }

  out.manifest.categories = train.categories;
  out.manifest.split = train.split;
  for (const auto& inst : train.instances) {
    const auto it = done.find(inst.id);
    out.manifest.instances.push_back(it == done.end() ? inst : it->second.instance);
  }
  for (auto& [id, r] : done) {
    out.records.push_back(r.record);
    if (r.trace) out.traces.push_back(*r.trace);
  }
  return out;
}

}  // namespace badcm
