#include "badcm/mining.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <spdlog/spdlog.h>

#include "json.hpp"

#include "badcm/error.hpp"

namespace badcm {

using nlohmann::json;

long InvariantMask::popcount() const { return static_cast<long>(std::count(mask.begin(), mask.end(), 1)); }

InvariantMask InvariantMask::from_boxes(int height, int width, std::span<const RegionProposal> boxes) {
  InvariantMask m;
  m.height = height;
  m.width = width;
  m.mask.assign(static_cast<std::size_t>(height) * width, 0);
  for (const auto& b : boxes) {
    if (!b.within(height, width)) throw ValidationError("region outside image bounds");
    for (int y = b.top; y < b.top + b.height; ++y)
      std::fill_n(m.mask.begin() + static_cast<std::ptrdiff_t>(y) * width + b.left, b.width, 1);
    m.selected.push_back(b);
  }
  return m;
}

ImageSample mask_fill(const ImageSample& image, const RegionProposal& region, const std::array<double, 3>& fill) {
  if (!region.within(image.height(), image.width())) throw ValidationError("region outside image bounds");
  std::vector<double> px(image.pixels().begin(), image.pixels().end());
  for (int y = region.top; y < region.top + region.height; ++y)
    for (int x = region.left; x < region.left + region.width; ++x)
      for (int c = 0; c < 3; ++c) px[image.index(y, x, c)] = fill[c];
  return ImageSample(image.height(), image.width(), std::move(px));
}

std::array<double, 3> channel_mean(std::span<const ImageSample> images) {
  std::array<double, 3> sum{0, 0, 0};
  double count = 0;
  for (const auto& img : images) {
    for (std::size_t i = 0; i < img.pixels().size(); ++i) sum[i % 3] += img.pixels()[i];
    count += static_cast<double>(img.pixels().size() / 3);
  }
  if (count == 0) return {0.5, 0.5, 0.5};
  return {sum[0] / count, sum[1] / count, sum[2] / count};
}

std::vector<ScoredRegion> visual_importance(const ImageSample& image, const TextSample& text,
                                            std::span<const RegionProposal> regions, const ImageEmbedder& image_embedder,
                                            const TextEmbedder& text_embedder, const std::array<double, 3>& fill) {
  if (regions.empty()) throw ValidationError("visual_importance: empty region list");
  const auto text_vec = text_embedder.embed_text(text);
  std::vector<ScoredRegion> out;
  out.reserve(regions.size());
  for (const auto& r : regions) {
    const auto masked = image_embedder.embed_image(mask_fill(image, r, fill));
    out.push_back({r, 1.0 - cosine_similarity(masked, text_vec)});
  }
  return out;
}

KnapsackSolution solve_knapsack(std::span<const long> weights, std::span<const double> values, long capacity) {
  if (weights.size() != values.size()) throw ValidationError("knapsack: weights and values differ in length");
  const std::size_t n = weights.size();
  const auto cap = static_cast<std::size_t>(std::max(0L, capacity));
  std::vector<double> best(cap + 1, 0.0), next(cap + 1);
  std::vector<std::vector<bool>> take(n, std::vector<bool>(cap + 1, false));
  for (std::size_t i = 0; i < n; ++i) {
    const long w = weights[i];
    if (w < 0) throw ValidationError("knapsack: negative weight");
    for (std::size_t c = 0; c <= cap; ++c) {
      next[c] = best[c];
      if (static_cast<long>(c) >= w) {
        const double with = best[c - static_cast<std::size_t>(w)] + values[i];
        if (with > next[c]) {
          next[c] = with;
          take[i][c] = true;
        }
      }
    }
    std::swap(best, next);
  }
  KnapsackSolution sol;
  std::size_t c = cap;
  for (std::size_t i = n; i-- > 0;) {
    if (take[i][c]) {
      sol.chosen.push_back(i);
      c -= static_cast<std::size_t>(weights[i]);
    }
  }
  std::reverse(sol.chosen.begin(), sol.chosen.end());
  for (auto i : sol.chosen) sol.value += values[i];
  return sol;
}

std::vector<std::size_t> deduplicate_regions(std::span<const ScoredRegion> scored, double threshold) {
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scored[a].importance > scored[b].importance; });
  std::vector<std::size_t> kept;
  for (auto i : order) {
    const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return intersection_over_union(scored[i].region, scored[k].region) > threshold;
    });
    if (!duplicate) kept.push_back(i);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

long pixel_budget(int height, int width, double fraction) {
  return static_cast<long>(std::floor(fraction * static_cast<double>(height) * width + 1e-9));
}

InvariantMask select_regions_dp(std::span<const ScoredRegion> scored, int height, int width, double budget_fraction,
                                double dedup_iou) {
  if (scored.empty()) throw ValidationError("select_regions_dp: no scored regions");
  if (!(budget_fraction > 0.0 && budget_fraction <= 1.0)) throw ValidationError("budget fraction must be in (0, 1]");
  const long capacity = pixel_budget(height, width, budget_fraction);
  const auto kept = deduplicate_regions(scored, dedup_iou);

  std::vector<long> weights;
  std::vector<double> values;
  for (auto i : kept) {
    if (!scored[i].region.within(height, width)) throw ValidationError("region outside image bounds");
    weights.push_back(scored[i].region.area());
    values.push_back(scored[i].importance);
  }
  const auto sol = solve_knapsack(weights, values, capacity);
  std::vector<RegionProposal> boxes;
  for (auto j : sol.chosen) boxes.push_back(scored[kept[j]].region);
  InvariantMask mask = InvariantMask::from_boxes(height, width, boxes);
  mask.objective = sol.value;
  mask.nothing_fits = std::none_of(weights.begin(), weights.end(), [&](long w) { return w <= capacity; });
  if (mask.nothing_fits) spdlog::warn("select_regions_dp: no region fits the {} pixel budget", capacity);
  return mask;
}

TokenScores textual_importance(const TextSample& text, const ImageSample& image, const ImageEmbedder& image_embedder,
                               const TextEmbedder& text_embedder) {
  const auto image_vec = image_embedder.embed_image(image);
  TokenScores out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto masked = text.with_replacements({{i, std::string(kMaskToken)}});
    out.scores.push_back(1.0 - cosine_similarity(image_vec, text_embedder.embed_text(masked)));
    out.ineligible.push_back(is_ineligible_token(text.tokens()[i]));
  }
  return out;
}

std::size_t keyword_quota(std::size_t length, double ratio) {
  const auto q = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(length) + 1e-9));
  return std::max<std::size_t>(1, q);
}

KeywordSelection select_keywords(const TokenScores& scores, const TextSample& text, double ratio) {
  if (scores.scores.size() != text.size()) throw ValidationError("select_keywords: score count differs from text length");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < text.size(); ++i)
    if (!is_ineligible_token(text.tokens()[i])) eligible.push_back(i);
  KeywordSelection sel;
  if (eligible.empty()) {
    sel.unpoisonable = true;
    return sel;
  }
  std::stable_sort(eligible.begin(), eligible.end(),
                   [&](std::size_t a, std::size_t b) { return scores.scores[a] > scores.scores[b]; });
  const std::size_t count = std::min(eligible.size(), keyword_quota(text.size(), ratio));
  for (std::size_t k = 0; k < count; ++k) {
    sel.positions.push_back(eligible[k]);
    sel.scores.push_back(scores.scores[eligible[k]]);
  }
  return sel;
}

MiningRecord mine_instance(const PairedInstance& instance, const SurrogateSet& s, const MiningConfig& config) {
  const ImageSample& image = instance.image.get();
  MiningRecord rec;
  rec.id = instance.id;
  const auto regions = s.regions->propose_regions(image, config.max_regions);
  const auto scored = visual_importance(image, instance.text, regions, *s.image, *s.text, config.fill);
  for (const auto& r : scored) rec.region_scores.push_back(r.importance);
  rec.mask = select_regions_dp(scored, image.height(), image.width(), config.region_budget, config.dedup_iou);
  const auto tokens = textual_importance(instance.text, image, *s.image, *s.text);
  rec.token_scores = tokens.scores;
  rec.keywords = select_keywords(tokens, instance.text, config.keyword_ratio);
  return rec;
}

// ---------------------------------------------------------------- RLE + sidecar

std::vector<long> encode_rle(std::span<const std::uint8_t> mask) {
  std::vector<long> runs;
  std::uint8_t current = 0;
  long run = 0;
  for (auto v : mask) {
    if (v != current) {
      runs.push_back(run);
      current = v;
      run = 0;
    }
    ++run;
  }
  runs.push_back(run);
  return runs;
}

std::vector<std::uint8_t> decode_rle(std::span<const long> runs, std::size_t size) {
  std::vector<std::uint8_t> mask;
  mask.reserve(size);
  std::uint8_t v = 0;
  for (long r : runs) {
    if (r < 0) throw ValidationError("negative run length");
    mask.insert(mask.end(), static_cast<std::size_t>(r), v);
    v ^= 1;
  }
  if (mask.size() != size) throw ValidationError("run lengths do not cover the mask");
  return mask;
}

namespace {

json box_json(const RegionProposal& b) { return json::array({b.top, b.left, b.height, b.width}); }

}  // namespace

void write_mining_sidecar(const std::filesystem::path& path, std::span<const MiningRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write mining sidecar: " + path.string());
  out << json{{"format", "badcm-mining"},
              {"version", 1},
              {"mask_rle", "row-major run lengths over height*width pixels, alternating 0-runs and 1-runs, "
                           "starting with a (possibly empty) 0-run"},
              {"box", "[top, left, height, width] in pixels"}}
             .dump()
      << '\n';
  for (const auto& r : records) {
    json boxes = json::array();
    for (const auto& b : r.mask.selected) boxes.push_back(box_json(b));
    out << json{{"id", r.id},
                {"height", r.mask.height},
                {"width", r.mask.width},
                {"selected_boxes", boxes},
                {"mask_rle", encode_rle(r.mask.mask)},
                {"objective", r.mask.objective},
                {"nothing_fits", r.mask.nothing_fits},
                {"keyword_positions", r.keywords.positions},
                {"keyword_scores", r.keywords.scores},
                {"unpoisonable", r.keywords.unpoisonable},
                {"scores", {{"regions", r.region_scores}, {"tokens", r.token_scores}}}}
               .dump()
        << '\n';
  }
  if (!out) throw IoError("failed writing mining sidecar: " + path.string());
}

std::map<std::string, MiningRecord> read_mining_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mining sidecar: " + path.string());
  std::map<std::string, MiningRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (lineno == 1) {
        if (j.value("format", "") != "badcm-mining") throw ParseError("not a mining sidecar", lineno);
        continue;
      }
      MiningRecord r;
      r.id = j.at("id").get<std::string>();
      r.mask.height = j.at("height").get<int>();
      r.mask.width = j.at("width").get<int>();
      r.mask.mask = decode_rle(j.at("mask_rle").get<std::vector<long>>(),
                               static_cast<std::size_t>(r.mask.height) * r.mask.width);
      for (const auto& b : j.at("selected_boxes")) r.mask.selected.push_back({b[0], b[1], b[2], b[3]});
      r.mask.objective = j.at("objective").get<double>();
      r.mask.nothing_fits = j.at("nothing_fits").get<bool>();
      r.keywords.positions = j.at("keyword_positions").get<std::vector<std::size_t>>();
      r.keywords.scores = j.at("keyword_scores").get<std::vector<double>>();
      r.keywords.unpoisonable = j.at("unpoisonable").get<bool>();
      r.region_scores = j.at("scores").at("regions").get<std::vector<double>>();
      r.token_scores = j.at("scores").at("tokens").get<std::vector<double>>();
      out.emplace(r.id, std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return out;
}

}  // namespace badcm
