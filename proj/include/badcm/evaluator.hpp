#pragma once

// Retrieval metrics (MAP / t-MAP at k), image quality, text similarity and the
// attack report.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "badcm/datamodel.hpp"
#include "badcm/surrogate.hpp"

namespace badcm {

/// AP over the first k positions; the denominator is the number of relevant items within them.
double average_precision(std::span<const std::uint8_t> relevance, std::size_t k);

struct RankedResult {
  std::string query_id;
  std::vector<std::string> database_ids;
  std::vector<std::uint8_t> relevance;
};

/// Database indices by descending cosine to `query`, ties by ascending database id.
std::vector<std::size_t> rank_database(std::span<const double> query, std::span<const std::vector<double>> database,
                                       std::span<const std::string> database_ids);

using RelevanceFn = std::function<bool(std::size_t query, std::size_t item)>;

struct RetrievalSet {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> embeddings;
};

/// Mean AP@k over queries. `k` is capped at the database size.
double map_at_k(const RetrievalSet& queries, const RetrievalSet& database, const RelevanceFn& relevant, std::size_t k,
                std::vector<RankedResult>* details = nullptr);

struct ImageQuality {
  double psnr = 0;  // +infinity for identical images
  double ssim = 0;
  double mse = 0;

  bool psnr_infinite() const { return psnr == std::numeric_limits<double>::infinity(); }
};

/// MSE and PSNR on the 0-255 scale; SSIM with an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, valid positions only, averaged over channels.
ImageQuality image_quality(const ImageSample& clean, const ImageSample& poisoned);
double mse_255(const ImageSample& a, const ImageSample& b);
double ssim(const ImageSample& a, const ImageSample& b);
/// "INF" for an infinite PSNR, otherwise fixed with two decimals.
std::string format_psnr(double psnr);

double semantic_similarity(const TextSample& a, const TextSample& b, const TextEmbedder& embedder);

/// Number of token positions that differ (texts of equal length), else the word-level edit distance.
std::size_t substitution_count(const TextSample& a, const TextSample& b);
std::size_t word_edit_distance(const TextSample& a, const TextSample& b);

struct AttackReport {
  std::string scenario;
  std::string asr_direction;  // "I2T" or "T2I"
  bool dual_key_as_v2l = false;
  int target = -1;
  std::size_t k = 0;
  std::size_t queries = 0;
  std::size_t asr_queries = 0;  // queries not already carrying the target
  std::size_t database = 0;
  double ba_i2t = 0, ba_t2i = 0, ba_avg = 0;
  double asr = 0;
  double target_prior = 0;  // fraction of database items carrying the target
  // Stealthiness of the triggered queries.
  std::size_t image_pairs = 0, psnr_infinite = 0;
  double psnr_mean = 0, ssim_mean = 0, mse_mean = 0;
  std::size_t text_pairs = 0;
  double sbert_avg = 0, substitutions_mean = 0, edit_distance_mean = 0;

  /// Flat key=value lines with fixed precision.
  std::string to_text() const;
};

void write_report(const std::filesystem::path& path, const std::string& text);

}  // namespace badcm
