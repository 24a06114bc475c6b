#pragma once

// Black-box surrogate models used by mining and trigger generation, plus
// small deterministic stand-ins that make the pipeline runnable without
// pretrained weights.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "badcm/autograd.hpp"
#include "badcm/datamodel.hpp"

namespace badcm {

struct EmbeddingVector {
  std::vector<double> values;

  int dim() const { return static_cast<int>(values.size()); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

/// Cosine similarity. A zero-norm argument yields 0 and logs a warning.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  return cosine_similarity(a.values, b.values);
}

/// Box in pixel coordinates.
struct RegionProposal {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  long area() const { return static_cast<long>(height) * width; }
  bool within(int image_height, int image_width) const {
    return top >= 0 && left >= 0 && height > 0 && width > 0 && top + height <= image_height &&
           left + width <= image_width;
  }
  friend bool operator==(const RegionProposal&, const RegionProposal&) = default;
};

double intersection_over_union(const RegionProposal& a, const RegionProposal& b);

struct CandidateSet {
  std::size_t position = 0;
  std::vector<std::string> words;
};

/// Fixed list of articles, prepositions, auxiliaries and similar function words.
bool is_stop_word(std::string_view word);
/// Stop words and punctuation tokens never carry keywords.
bool is_ineligible_token(std::string_view token);

inline constexpr std::string_view kMaskToken = "[MASK]";

class ImageEmbedder {
 public:
  virtual ~ImageEmbedder() = default;
  virtual int dimension() const = 0;
  virtual EmbeddingVector embed_image(const ImageSample& image) const = 0;
  /// Must equal per-item embed_image calls exactly.
  virtual std::vector<EmbeddingVector> embed_images(std::span<const ImageSample> images) const;
  /// Hash of the extractor's parameters.
  virtual std::uint64_t checksum() const = 0;
};

/// Image embedder that can also run inside an autograd graph on NCHW batches.
class DifferentiableImageEmbedder : public ImageEmbedder {
 public:
  virtual ag::Var embed_batch(const ag::Var& images_nchw) const = 0;
};

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual int dimension() const = 0;
  virtual EmbeddingVector embed_text(const TextSample& text) const = 0;
  virtual std::vector<EmbeddingVector> embed_texts(std::span<const TextSample> texts) const;
};

class RegionProposer {
 public:
  virtual ~RegionProposer() = default;
  virtual std::vector<RegionProposal> propose_regions(const ImageSample& image, int max_regions) const = 0;
};

/// Masked-word candidate source. Filtering is shared by every backend.
class CandidateOracle {
 public:
  virtual ~CandidateOracle() = default;

  /// Top-N ranked words for `position`, then stop words and the original word removed.
  CandidateSet mask_candidates(const TextSample& text, std::size_t position, int n) const;

 protected:
  /// Ranked candidates for the token at `position`; at most `limit` are used.
  virtual std::vector<std::string> ranked_candidates(const TextSample& text, std::size_t position,
                                                     int limit) const = 0;
};

// ---------------------------------------------------------------- toy models

/// Mean colour of each cell of a 4x4 grid plus global texture energies
/// (per channel and luminance, two directions, lags 1 and 2), projected by a
/// fixed seeded matrix. The statistics are differentiable in the pixels.
class ToyImageEmbedder final : public DifferentiableImageEmbedder {
 public:
  static constexpr int kGrid = 4;
  static constexpr int kColourStats = kGrid * kGrid * 3;
  static constexpr int kTextureStats = 16;
  static constexpr int kStats = kColourStats + kTextureStats;
  /// Texture statistic is kEnergyScale * log(1 + energy / kEnergyFloor).
  static constexpr double kEnergyFloor = 1e-3;
  static constexpr double kEnergyScale = 0.25;

  explicit ToyImageEmbedder(std::uint64_t seed = 17, int dim = 64);

  int dimension() const override { return dim_; }
  EmbeddingVector embed_image(const ImageSample& image) const override;
  ag::Var embed_batch(const ag::Var& images_nchw) const override;
  std::uint64_t checksum() const override;

  /// Embedding of the all-black image of any size.
  EmbeddingVector zero_signature() const;
  /// Raw statistics of an NCHW batch as a graph op, N x kStats.
  static ag::Var tile_stats(const ag::Var& images_nchw);

 private:
  int dim_;
  ag::Var projection_;  // [dim, kStats], constant
};

/// Seeded hashed bag of words with positional decay. Stop words and
/// punctuation are skipped; bracketed tokens such as [MASK] share one unknown-word vector.
class ToyTextEmbedder final : public TextEmbedder {
 public:
  explicit ToyTextEmbedder(std::uint64_t seed = 29, int dim = 64, double decay = 0.9);

  int dimension() const override { return dim_; }
  EmbeddingVector embed_text(const TextSample& text) const override;
  /// Vector returned for texts with no content words.
  EmbeddingVector base_vector() const;
  std::vector<double> word_vector(std::string_view word) const;

 private:
  std::uint64_t seed_;
  int dim_;
  double decay_;
};

/// 4x4 grid tiles followed by 2x2 grid tiles, truncated to max_regions.
class GridRegionProposer final : public RegionProposer {
 public:
  std::vector<RegionProposal> propose_regions(const ImageSample& image, int max_regions) const override;
};

using Lexicon = std::map<std::string, std::vector<std::string>, std::less<>>;

/// The bundled synonym table.
const Lexicon& bundled_lexicon();

class LexiconCandidateOracle final : public CandidateOracle {
 public:
  LexiconCandidateOracle() : lexicon_(bundled_lexicon()) {}
  explicit LexiconCandidateOracle(Lexicon lexicon) : lexicon_(std::move(lexicon)) {}

 protected:
  std::vector<std::string> ranked_candidates(const TextSample& text, std::size_t position, int limit) const override;

 private:
  Lexicon lexicon_;
};

/// Bundle of the four surrogate roles.
struct SurrogateSet {
  const ImageEmbedder* image = nullptr;
  const TextEmbedder* text = nullptr;
  const RegionProposer* regions = nullptr;
  const CandidateOracle* candidates = nullptr;
};

}  // namespace badcm
