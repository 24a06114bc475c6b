#pragma once

// Two-tower retrieval model trained on frozen surrogate features; the victim
// whose backdoor the toy pipeline measures.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"

#include "badcm/datamodel.hpp"
#include "badcm/evaluator.hpp"
#include "badcm/nn.hpp"
#include "badcm/poisoner.hpp"
#include "badcm/surrogate.hpp"

namespace badcm {

struct VictimConfig {
  int hidden = 64;
  int common_dim = 32;
  int epochs = 60;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double temperature = 0.1;
  double contrastive_weight = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
  static VictimConfig from_json(const nlohmann::json& j);
};

/// Frozen feature extractors feeding the towers.
struct FeatureSpace {
  const ImageEmbedder* image = nullptr;
  const TextEmbedder* text = nullptr;
};

struct PairFeatures {
  std::vector<std::vector<double>> image;
  std::vector<std::vector<double>> text;
};

PairFeatures extract_features(const DatasetManifest& manifest, const FeatureSpace& space);

class ToyVictim {
 public:
  ToyVictim() = default;
  ToyVictim(int image_in, int text_in, int categories, const VictimConfig& config, std::uint64_t seed);

  /// Per-feature standardisation, fitted on the training features.
  void fit_normalization(const PairFeatures& train);

  ag::Var image_tower(const std::vector<std::vector<double>>& raw) const;
  ag::Var text_tower(const std::vector<std::vector<double>>& raw) const;
  ag::Var classify(const ag::Var& common) const { return classifier_(common); }

  std::vector<std::vector<double>> embed_images(const std::vector<std::vector<double>>& raw) const;
  std::vector<std::vector<double>> embed_texts(const std::vector<std::vector<double>>& raw) const;

  std::vector<nn::NamedParameter> parameters() const;
  nlohmann::json config_json() const;

  void save(const std::filesystem::path& path) const;
  static ToyVictim load(const std::filesystem::path& path);

 private:
  ag::Var tower(const nn::Linear& l1, const nn::Linear& l2, const std::vector<double>& mean,
                const std::vector<double>& stddev, const std::vector<std::vector<double>>& raw) const;

  int image_in_ = 0, text_in_ = 0, categories_ = 0;
  VictimConfig config_;
  nn::Linear img1_, img2_, txt1_, txt2_, classifier_;
  std::vector<double> img_mean_, img_std_, txt_mean_, txt_std_;
};

struct VictimTrainResult {
  ToyVictim victim;
  std::vector<double> epoch_loss;
  int steps = 0;
};

/// Label classification on both towers plus a symmetric cross-modal InfoNCE term
/// in which every label-sharing pair counts as a positive.
VictimTrainResult train_toy_victim(const PairFeatures& features, const std::vector<LabelVector>& labels,
                                   int categories, const VictimConfig& config, std::uint64_t seed);
VictimTrainResult train_toy_victim(const DatasetManifest& train, const FeatureSpace& space, const VictimConfig& config,
                                   std::uint64_t seed);

/// BA from clean queries in both directions; ASR as t-MAP of the triggered
/// queries (image-to-text for image triggers, text-to-image otherwise).
AttackReport attack_report(const ToyVictim& victim, const FeatureSpace& space, const DatasetManifest& clean_queries,
                           const DatasetManifest& triggered_queries, const DatasetManifest& database, int target,
                           std::size_t k, AttackScenario scenario, const TextEmbedder* similarity_embedder = nullptr);

}  // namespace badcm
