#pragma once

// Run configuration and the stage functions behind the command-line tool.
//
// Run directory layout:
//   config.resolved.json
//   mine/            train.jsonl query.jsonl retrieval.jsonl, train_mining.jsonl query_mining.jsonl
//   train-trigger/   generator.ckpt discriminator.ckpt train_log.jsonl (or skipped.json)
//   clean-victim/    victim.ckpt curve.jsonl
//   targets/<t>/poison/         images/ manifest.jsonl provenance.jsonl traces.jsonl plan.json
//   targets/<t>/train-victim/   victim.ckpt curve.jsonl
//   targets/<t>/evaluate/       report.txt baseline_report.txt
//   report.txt       aggregate over targets

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "badcm/http_surrogate.hpp"
#include "badcm/mining.hpp"
#include "badcm/poisoner.hpp"
#include "badcm/textual_trigger.hpp"
#include "badcm/toy_victim.hpp"
#include "badcm/visual_trigger.hpp"

namespace badcm {

struct RunConfig {
  std::filesystem::path dataset;  // manifest path
  int image_size = 32;
  std::array<double, 3> split{0.6, 0.2, 0.2};
  AttackScenario scenario = AttackScenario::V2L;
  std::vector<int> targets{0};
  double ratio = 0.05;
  std::uint64_t seed = 1;
  MiningConfig mining;
  TriggerTrainConfig trigger;
  int trigger_train_images = 0;  // 0 uses the whole training split
  int patch_size = 0;            // 0 scales the default patch to the image size
  TextPoisonConfig text;
  VictimConfig victim;
  bool clean_baseline = true;
  std::size_t k = 5000;
  std::string backend = "toy";  // "toy" or "external"
  HttpSurrogateConfig http;
  std::uint64_t toy_image_seed = 17;
  std::uint64_t toy_text_seed = 29;

  /// Checks every field; messages name the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  /// Relative dataset paths are resolved against `base_dir`.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
};

RunConfig load_run_config(const std::filesystem::path& path);

/// Owns the surrogate models selected by a run configuration.
class SurrogateBundle {
 public:
  explicit SurrogateBundle(const RunConfig& config);

  SurrogateSet set() const { return {image_.get(), text_.get(), regions_.get(), candidates_.get()}; }
  /// Null when the image surrogate cannot be differentiated (external backend).
  const DifferentiableImageEmbedder* differentiable_image() const;
  /// The victim's own frozen feature extractors.
  FeatureSpace victim_features() const { return {victim_image_.get(), victim_text_.get()}; }

 private:
  std::unique_ptr<ImageEmbedder> image_;
  std::unique_ptr<TextEmbedder> text_;
  std::unique_ptr<RegionProposer> regions_;
  std::unique_ptr<CandidateOracle> candidates_;
  std::unique_ptr<ImageEmbedder> victim_image_;
  std::unique_ptr<TextEmbedder> victim_text_;
};

struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path mine() const { return root / "mine"; }
  std::filesystem::path trigger() const { return root / "train-trigger"; }
  std::filesystem::path clean_victim() const { return root / "clean-victim"; }
  std::filesystem::path target(int t) const { return root / "targets" / std::to_string(t); }
  std::filesystem::path poison(int t) const { return target(t) / "poison"; }
  std::filesystem::path victim(int t) const { return target(t) / "train-victim"; }
  std::filesystem::path evaluate(int t) const { return target(t) / "evaluate"; }
};

/// Raises a validation error naming `stage` when `path` does not exist.
void require_artifact(const std::filesystem::path& path, const std::string& stage);

void write_resolved_config(const RunConfig& config, const RunPaths& paths);

struct MineSummary {
  std::size_t train = 0, query = 0, retrieval = 0;
  std::size_t unpoisonable = 0, nothing_fits = 0;
  double mean_mask_fraction = 0;
};
struct TriggerSummary {
  bool skipped = false;
  std::vector<EpochLog> log;
  double mask_energy_ratio = 0;  // mean over training images
};
struct PoisonSummary {
  std::size_t victims = 0, replaced = 0, train = 0;
};
struct VictimSummary {
  double final_loss = 0, baseline_final_loss = 0;
  int steps = 0;
};
struct EvaluateSummary {
  AttackReport poisoned;
  AttackReport baseline;
  bool has_baseline = false;
};

MineSummary run_mine(const RunConfig& config, const RunPaths& paths, const SurrogateBundle& surrogates);
TriggerSummary run_train_trigger(const RunConfig& config, const RunPaths& paths, const SurrogateBundle& surrogates);
PoisonSummary run_poison(const RunConfig& config, const RunPaths& paths, const SurrogateBundle& surrogates, int target);
VictimSummary run_train_victim(const RunConfig& config, const RunPaths& paths, const SurrogateBundle& surrogates,
                               int target);
EvaluateSummary run_evaluate(const RunConfig& config, const RunPaths& paths, const SurrogateBundle& surrogates,
                             int target);

/// Mean over targets of the headline numbers, as key=value text.
std::string aggregate_report(const RunConfig& config, const std::vector<EvaluateSummary>& results);

/// Every stage in order, for every target. Writes the aggregate report.
std::vector<EvaluateSummary> run_pipeline(const RunConfig& config, const RunPaths& paths);

}  // namespace badcm
