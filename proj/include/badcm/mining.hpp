#pragma once

// Cross-modal mining: score each region (word) by how much masking it lowers
// image-text similarity under the surrogate, then pick the modality-invariant
// components within an area (length) budget.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "badcm/datamodel.hpp"
#include "badcm/surrogate.hpp"

namespace badcm {

struct ScoredRegion {
  RegionProposal region;
  double importance = 0.0;
};

struct InvariantMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> mask;  // H*W, row-major, 0/1
  std::vector<RegionProposal> selected;
  double objective = 0.0;      // sum of selected importances, accumulated in input order
  bool nothing_fits = false;   // no proposal fits within the budget

  long popcount() const;
  bool contains(int y, int x) const { return mask[static_cast<std::size_t>(y) * width + x] != 0; }
  /// Rasterises the union of `boxes`.
  static InvariantMask from_boxes(int height, int width, std::span<const RegionProposal> boxes);
};

struct KeywordSelection {
  std::vector<std::size_t> positions;  // descending score, ties by lower index
  std::vector<double> scores;
  bool unpoisonable = false;           // no eligible token
};

struct TokenScores {
  std::vector<double> scores;
  std::vector<bool> ineligible;  // stop word or punctuation
};

struct MiningConfig {
  double region_budget = 0.30;
  double keyword_ratio = 0.40;
  int max_regions = 20;
  double dedup_iou = 0.90;
  std::array<double, 3> fill{0.5, 0.5, 0.5};
};

/// Copy of `image` with `region` painted in `fill`.
ImageSample mask_fill(const ImageSample& image, const RegionProposal& region, const std::array<double, 3>& fill);

/// Per-channel mean over a set of images; {0.5,0.5,0.5} for an empty set.
std::array<double, 3> channel_mean(std::span<const ImageSample> images);

std::vector<ScoredRegion> visual_importance(const ImageSample& image, const TextSample& text,
                                            std::span<const RegionProposal> regions, const ImageEmbedder& image_embedder,
                                            const TextEmbedder& text_embedder,
                                            const std::array<double, 3>& fill = {0.5, 0.5, 0.5});

struct KnapsackSolution {
  std::vector<std::size_t> chosen;  // ascending item indices
  double value = 0.0;
};

/// Exact 0/1 knapsack by dynamic programming over integer capacity.
/// An item is taken only when it strictly improves the value.
KnapsackSolution solve_knapsack(std::span<const long> weights, std::span<const double> values, long capacity);

/// Indices kept after dropping any box whose IoU with a better-scoring box exceeds `threshold`.
std::vector<std::size_t> deduplicate_regions(std::span<const ScoredRegion> scored, double threshold);

long pixel_budget(int height, int width, double fraction);

InvariantMask select_regions_dp(std::span<const ScoredRegion> scored, int height, int width,
                                double budget_fraction = 0.30, double dedup_iou = 0.90);

TokenScores textual_importance(const TextSample& text, const ImageSample& image, const ImageEmbedder& image_embedder,
                               const TextEmbedder& text_embedder);

std::size_t keyword_quota(std::size_t length, double ratio);

KeywordSelection select_keywords(const TokenScores& scores, const TextSample& text, double ratio = 0.40);

// ---------------------------------------------------------------- sidecar

struct MiningRecord {
  std::string id;
  InvariantMask mask;
  KeywordSelection keywords;
  std::vector<double> region_scores;
  std::vector<double> token_scores;
};

MiningRecord mine_instance(const PairedInstance& instance, const SurrogateSet& surrogates, const MiningConfig& config);

/// Run-length code: alternating 0-runs and 1-runs over the row-major mask, starting with a 0-run.
std::vector<long> encode_rle(std::span<const std::uint8_t> mask);
std::vector<std::uint8_t> decode_rle(std::span<const long> runs, std::size_t size);

// Sidecar files are line-delimited JSON; line 1 is a header describing the mask encoding.
void write_mining_sidecar(const std::filesystem::path& path, std::span<const MiningRecord> records);
std::map<std::string, MiningRecord> read_mining_sidecar(const std::filesystem::path& path);

}  // namespace badcm
