#include "badcm/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "badcm/error.hpp"

namespace badcm {

double average_precision(std::span<const std::uint8_t> relevance, std::size_t k) {
  if (relevance.empty()) {
    spdlog::warn("average_precision: empty ranking");
    return 0.0;
  }
  const std::size_t n = std::min(k, relevance.size());
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!relevance[i]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

std::vector<std::size_t> rank_database(std::span<const double> query, std::span<const std::vector<double>> database,
                                       std::span<const std::string> database_ids) {
  if (database.size() != database_ids.size()) throw ValidationError("rank_database: ids and embeddings differ in count");
  std::vector<double> score(database.size());
  for (std::size_t i = 0; i < database.size(); ++i) score[i] = cosine_similarity(query, database[i]);
  std::vector<std::size_t> order(database.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return database_ids[a] < database_ids[b];
  });
  return order;
}

double map_at_k(const RetrievalSet& queries, const RetrievalSet& database, const RelevanceFn& relevant, std::size_t k,
                std::vector<RankedResult>* details) {
  if (queries.embeddings.empty()) throw ValidationError("map_at_k: empty query set");
  if (queries.ids.size() != queries.embeddings.size()) throw ValidationError("map_at_k: query ids and embeddings differ");
  if (k == 0) throw ValidationError("map_at_k: k must be positive");
  const std::size_t kk = std::min(k, database.embeddings.size());
  double total = 0.0;
  for (std::size_t q = 0; q < queries.embeddings.size(); ++q) {
    const auto order = rank_database(queries.embeddings[q], database.embeddings, database.ids);
    std::vector<std::uint8_t> rel(kk);
    for (std::size_t i = 0; i < kk; ++i) rel[i] = relevant(q, order[i]) ? 1 : 0;
    total += kk == 0 ? 0.0 : average_precision(rel, kk);
    if (details) {
      RankedResult r{queries.ids[q], {}, rel};
      for (std::size_t i = 0; i < kk; ++i) r.database_ids.push_back(database.ids[order[i]]);
      details->push_back(std::move(r));
    }
  }
  return total / static_cast<double>(queries.embeddings.size());
}

// ---------------------------------------------------------------- image quality

namespace {

void check_dims(const ImageSample& a, const ImageSample& b) {
  if (a.height() != b.height() || a.width() != b.width()) throw ValidationError("image_quality: image sizes differ");
  if (a.pixels().empty()) throw ValidationError("image_quality: empty image");
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size) * size);
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double v = std::exp(-((y - c) * (y - c) + (x - c) * (x - c)) / (2 * sigma * sigma));
      w[static_cast<std::size_t>(y) * size + x] = v;
      sum += v;
    }
  for (double& v : w) v /= sum;
  return w;
}

}  // namespace

double mse_255(const ImageSample& a, const ImageSample& b) {
  check_dims(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.pixels().size(); ++i) {
    const double d = (a.pixels()[i] - b.pixels()[i]) * 255.0;
    sum += d * d;
  }
  return sum / static_cast<double>(a.pixels().size());
}

double ssim(const ImageSample& a, const ImageSample& b) {
  check_dims(a, b);
  const int H = a.height(), W = a.width();
  const int size = std::min({11, H, W});
  const auto w = gaussian_window(size, 1.5);
  const double c1 = (0.01 * 255) * (0.01 * 255), c2 = (0.03 * 255) * (0.03 * 255);
  double total = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < 3; ++c)
    for (int y0 = 0; y0 + size <= H; ++y0)
      for (int x0 = 0; x0 + size <= W; ++x0) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int dy = 0; dy < size; ++dy)
          for (int dx = 0; dx < size; ++dx) {
            const double g = w[static_cast<std::size_t>(dy) * size + dx];
            const double x = a.at(y0 + dy, x0 + dx, c) * 255.0, yv = b.at(y0 + dy, x0 + dx, c) * 255.0;
            mx += g * x;
            my += g * yv;
            sxx += g * (x * x);
            syy += g * (yv * yv);
            sxy += g * (x * yv);
          }
        const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
        total += ((2 * (mx * my) + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
  return total / static_cast<double>(count);
}

ImageQuality image_quality(const ImageSample& clean, const ImageSample& poisoned) {
  ImageQuality q;
  q.mse = mse_255(clean, poisoned);
  q.psnr = q.mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(255.0 * 255.0 / q.mse);
  q.ssim = ssim(clean, poisoned);
  return q;
}

std::string format_psnr(double psnr) {
  if (std::isinf(psnr)) return "INF";
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << psnr;
  return s.str();
}

// ---------------------------------------------------------------- text

double semantic_similarity(const TextSample& a, const TextSample& b, const TextEmbedder& embedder) {
  return cosine_similarity(embedder.embed_text(a), embedder.embed_text(b));
}

std::size_t word_edit_distance(const TextSample& a, const TextSample& b) {
  const auto& s = a.tokens();
  const auto& t = b.tokens();
  std::vector<std::size_t> prev(t.size() + 1), cur(t.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= s.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= t.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (s[i - 1] == t[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[t.size()];
}

std::size_t substitution_count(const TextSample& a, const TextSample& b) {
  if (a.size() != b.size()) return word_edit_distance(a, b);
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a.tokens()[i] != b.tokens()[i];
  return n;
}

// ---------------------------------------------------------------- report

std::string AttackReport::to_text() const {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(6);
  s << "scenario=" << scenario << '\n'
    << "asr_direction=" << asr_direction << '\n'
    << "dual_key_evaluated_as_v2l=" << (dual_key_as_v2l ? "true" : "false") << '\n'
    << "target=" << target << '\n'
    << "k=" << k << '\n'
    << "queries=" << queries << '\n'
    << "asr_queries=" << asr_queries << '\n'
    << "database=" << database << '\n'
    << "ba_i2t=" << ba_i2t << '\n'
    << "ba_t2i=" << ba_t2i << '\n'
    << "ba_avg=" << ba_avg << '\n'
    << "asr=" << asr << '\n'
    << "target_prior=" << target_prior << '\n'
    << "image_pairs=" << image_pairs << '\n'
    << "psnr_infinite=" << psnr_infinite << '\n'
    << "psnr_mean=" << format_psnr(psnr_mean) << '\n'
    << "ssim_mean=" << ssim_mean << '\n'
    << "mse_mean=" << mse_mean << '\n'
    << "text_pairs=" << text_pairs << '\n'
    << "sbert_avg=" << sbert_avg << '\n'
    << "substitutions_mean=" << substitutions_mean << '\n'
    << "edit_distance_mean=" << edit_distance_mean << '\n';
  return s.str();
}

void write_report(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write report: " + path.string());
  out << text;
}

}  // namespace badcm
