#include "badcm/surrogate.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>

#include <spdlog/spdlog.h>

#include "badcm/error.hpp"
#include "badcm/random.hpp"

namespace badcm {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ValidationError("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    spdlog::warn("cosine_similarity: zero vector, returning 0");
    return 0.0;
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double intersection_over_union(const RegionProposal& a, const RegionProposal& b) {
  const int y0 = std::max(a.top, b.top), y1 = std::min(a.top + a.height, b.top + b.height);
  const int x0 = std::max(a.left, b.left), x1 = std::min(a.left + a.width, b.left + b.width);
  const long inter = (y1 > y0 && x1 > x0) ? static_cast<long>(y1 - y0) * (x1 - x0) : 0;
  const long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

namespace {

const std::set<std::string, std::less<>>& stop_words() {
  static const std::set<std::string, std::less<>> words = {
      "a",     "an",    "the",   "on",    "in",     "at",      "of",    "to",    "for",   "with",  "by",
      "from",  "into",  "onto",  "over",  "under",  "upon",    "about", "as",    "and",   "or",    "but",
      "nor",   "so",    "is",    "are",   "was",    "were",    "be",    "been",  "being", "am",    "has",
      "have",  "had",   "do",    "does",  "did",    "will",    "would", "can",   "could", "shall", "should",
      "may",   "might", "must",  "this",  "that",   "these",   "those", "it",    "its",   "there", "their",
      "his",   "her",   "he",    "she",   "they",   "them",    "we",    "you",   "i",     "me",    "my",
      "your",  "our",   "than",  "then",  "some",   "any",     "each",  "while", "off",   "out",   "up",
      "down",  "very",  "just",  "also",  "not",    "no",      "if",    "which", "who",   "whom",  "what",
      "where", "when",  "how",   "all",   "both",   "such",    "own",   "same",  "too",   "s",     "t"};
  return words;
}

}  // namespace

bool is_stop_word(std::string_view word) { return stop_words().contains(word); }

bool is_ineligible_token(std::string_view token) { return is_stop_word(token) || is_punctuation_token(token); }

std::vector<EmbeddingVector> ImageEmbedder::embed_images(std::span<const ImageSample> images) const {
  std::vector<EmbeddingVector> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(embed_image(img));
  return out;
}

std::vector<EmbeddingVector> TextEmbedder::embed_texts(std::span<const TextSample> texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_text(t));
  return out;
}

CandidateSet CandidateOracle::mask_candidates(const TextSample& text, std::size_t position, int n) const {
  if (position >= text.size())
    throw ValidationError("candidate position " + std::to_string(position) + " outside text of length " +
                          std::to_string(text.size()));
  if (n < 1) throw ValidationError("candidate count N must be at least 1");
  CandidateSet set{position, {}};
  auto ranked = ranked_candidates(text, position, n);
  if (ranked.size() > static_cast<std::size_t>(n)) ranked.resize(static_cast<std::size_t>(n));
  const std::string& original = text.tokens()[position];
  for (auto& w : ranked) {
    std::string lowered = w;
    for (auto& c : lowered) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lowered.empty() || is_ineligible_token(lowered) || lowered == original) continue;
    if (std::find(set.words.begin(), set.words.end(), lowered) != set.words.end()) continue;
    set.words.push_back(std::move(lowered));
  }
  return set;
}

// ---------------------------------------------------------------- ToyImageEmbedder

namespace {

struct TileBounds {
  int y0, y1, x0, x1;
};

TileBounds tile_bounds(int ty, int tx, int h, int w) {
  const int g = ToyImageEmbedder::kGrid;
  return {ty * h / g, (ty + 1) * h / g, tx * w / g, (tx + 1) * w / g};
}

// Texture statistic k: channel (R, G, B or their mean) x direction (horizontal, vertical) x lag (1, 2).
struct TextureSpec {
  int channel;  // 0..2 colour, 3 luminance
  int dy, dx;
  double pairs;
};

TextureSpec texture_spec(int k, int h, int w) {
  const int channel = k % 4;
  const bool vertical = (k / 4) % 2 == 1;
  const int lag = 1 + k / 8;
  const int dy = vertical ? lag : 0, dx = vertical ? 0 : lag;
  return {channel, dy, dx, static_cast<double>(std::max(1, (h - dy) * (w - dx)))};
}

double texture_value(const double* img, std::size_t plane, int channel, std::size_t p) {
  if (channel < 3) return img[channel * plane + p];
  return (img[p] + img[plane + p] + img[2 * plane + p]) / 3.0;
}

void add_texture_grad(double* g, std::size_t plane, int channel, std::size_t p, double v) {
  if (channel < 3) {
    g[channel * plane + p] += v;
    return;
  }
  for (int c = 0; c < 3; ++c) g[c * plane + p] += v / 3.0;
}

}  // namespace

ToyImageEmbedder::ToyImageEmbedder(std::uint64_t seed, int dim) : dim_(dim) {
  Rng rng(mix_seed(seed, 0x1a6e));
  std::vector<double> p(static_cast<std::size_t>(dim) * kStats);
  const double s = 1.0 / std::sqrt(static_cast<double>(kStats));
  for (auto& x : p) x = rng.normal() * s;
  projection_ = ag::Var::constant({dim, kStats}, std::move(p));
}

ag::Var ToyImageEmbedder::tile_stats(const ag::Var& x) {
  if (x.shape().size() != 4 || x.dim(1) != 3) throw ValidationError("tile_stats expects an N x 3 x H x W batch");
  const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
  if (H < kGrid || W < kGrid) throw ValidationError("tile_stats needs images of at least 4 x 4 pixels");
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  std::vector<double> out(static_cast<std::size_t>(N) * kStats, 0.0);
  std::vector<double> energy(static_cast<std::size_t>(N) * kTextureStats, 0.0);
  const double* xv = x.value().data();

  for (int n = 0; n < N; ++n) {
    const double* img = xv + static_cast<std::size_t>(n) * 3 * plane;
    double* o = out.data() + static_cast<std::size_t>(n) * kStats;
    for (int ty = 0; ty < kGrid; ++ty)
      for (int tx = 0; tx < kGrid; ++tx) {
        const auto b = tile_bounds(ty, tx, H, W);
        const double count = static_cast<double>((b.y1 - b.y0) * (b.x1 - b.x0));
        for (int c = 0; c < 3; ++c) {
          double s = 0.0;
          for (int y = b.y0; y < b.y1; ++y)
            for (int xx = b.x0; xx < b.x1; ++xx) s += img[c * plane + static_cast<std::size_t>(y) * W + xx];
          o[(ty * kGrid + tx) * 3 + c] = s / count - 0.5;
        }
      }
    for (int k = 0; k < kTextureStats; ++k) {
      const auto t = texture_spec(k, H, W);
      double e = 0.0;
      for (int y = 0; y + t.dy < H; ++y)
        for (int xx = 0; xx + t.dx < W; ++xx) {
          const std::size_t p = static_cast<std::size_t>(y) * W + xx;
          const std::size_t q = p + static_cast<std::size_t>(t.dy) * W + t.dx;
          const double d = texture_value(img, plane, t.channel, q) - texture_value(img, plane, t.channel, p);
          e += d * d;
        }
      e /= t.pairs;
      energy[static_cast<std::size_t>(n) * kTextureStats + k] = e;
      o[kColourStats + k] = kEnergyScale * std::log1p(e / kEnergyFloor);
    }
  }

  auto xn = x.node();
  return ag::make_op({N, kStats}, std::move(out), {x}, [xn, energy, N, H, W, plane](ag::Node& self) {
    auto& g = xn->grad_buffer();
    for (int n = 0; n < N; ++n) {
      const double* img = xn->value.data() + static_cast<std::size_t>(n) * 3 * plane;
      double* gi = g.data() + static_cast<std::size_t>(n) * 3 * plane;
      const double* go = self.grad.data() + static_cast<std::size_t>(n) * kStats;
      for (int ty = 0; ty < kGrid; ++ty)
        for (int tx = 0; tx < kGrid; ++tx) {
          const auto b = tile_bounds(ty, tx, H, W);
          const double count = static_cast<double>((b.y1 - b.y0) * (b.x1 - b.x0));
          for (int c = 0; c < 3; ++c) {
            const double dm = go[(ty * kGrid + tx) * 3 + c] / count;
            for (int y = b.y0; y < b.y1; ++y)
              for (int xx = b.x0; xx < b.x1; ++xx) gi[c * plane + static_cast<std::size_t>(y) * W + xx] += dm;
          }
        }
      for (int k = 0; k < kTextureStats; ++k) {
        const auto t = texture_spec(k, H, W);
        const double e = energy[static_cast<std::size_t>(n) * kTextureStats + k];
        const double de = go[kColourStats + k] * kEnergyScale / (kEnergyFloor + e) / t.pairs;
        if (de == 0.0) continue;
        for (int y = 0; y + t.dy < H; ++y)
          for (int xx = 0; xx + t.dx < W; ++xx) {
            const std::size_t p = static_cast<std::size_t>(y) * W + xx;
            const std::size_t q = p + static_cast<std::size_t>(t.dy) * W + t.dx;
            const double d = texture_value(img, plane, t.channel, q) - texture_value(img, plane, t.channel, p);
            add_texture_grad(gi, plane, t.channel, q, 2.0 * d * de);
            add_texture_grad(gi, plane, t.channel, p, -2.0 * d * de);
          }
      }
    }
  });
}

ag::Var ToyImageEmbedder::embed_batch(const ag::Var& images_nchw) const {
  return ag::linear(tile_stats(images_nchw), projection_, ag::Var());
}

EmbeddingVector ToyImageEmbedder::embed_image(const ImageSample& image) const {
  auto x = ag::Var::constant({1, 3, image.height(), image.width()}, image.to_chw());
  auto f = embed_batch(x);
  return {std::vector<double>(f.value().begin(), f.value().end())};
}

EmbeddingVector ToyImageEmbedder::zero_signature() const {
  std::vector<double> stats(kStats, 0.0);
  std::fill_n(stats.begin(), kColourStats, -0.5);
  auto f = ag::linear(ag::Var::constant({1, kStats}, std::move(stats)), projection_, ag::Var());
  return {std::vector<double>(f.value().begin(), f.value().end())};
}

std::uint64_t ToyImageEmbedder::checksum() const {
  std::uint64_t h = fnv1a("toy-image-embedder");
  for (double v : projection_.value()) h = mix_seed(h, std::bit_cast<std::uint64_t>(v));
  return h;
}

// ---------------------------------------------------------------- ToyTextEmbedder

ToyTextEmbedder::ToyTextEmbedder(std::uint64_t seed, int dim, double decay) : seed_(seed), dim_(dim), decay_(decay) {}

std::vector<double> ToyTextEmbedder::word_vector(std::string_view word) const {
  const bool special = word.size() > 2 && word.front() == '[' && word.back() == ']';
  Rng rng(mix_seed(seed_, fnv1a(special ? std::string_view("<unk>") : word)));
  std::vector<double> v(static_cast<std::size_t>(dim_));
  const double s = 1.0 / std::sqrt(static_cast<double>(dim_));
  for (auto& x : v) x = rng.normal() * s;
  return v;
}

EmbeddingVector ToyTextEmbedder::base_vector() const {
  auto v = word_vector("<base>");
  for (auto& x : v) x *= 0.1;
  return {std::move(v)};
}

EmbeddingVector ToyTextEmbedder::embed_text(const TextSample& text) const {
  EmbeddingVector out = base_vector();
  double weight = 1.0;
  for (const auto& tok : text.tokens()) {
    if (!is_ineligible_token(tok)) {
      const auto wv = word_vector(tok);
      for (int d = 0; d < dim_; ++d) out.values[d] += weight * wv[d];
    }
    weight *= decay_;
  }
  return out;
}

// ---------------------------------------------------------------- GridRegionProposer

std::vector<RegionProposal> GridRegionProposer::propose_regions(const ImageSample& image, int max_regions) const {
  if (max_regions < 1) throw ValidationError("max_regions must be at least 1");
  std::vector<RegionProposal> out;
  const int H = image.height(), W = image.width();
  for (int g : {4, 2}) {
    for (int ty = 0; ty < g; ++ty)
      for (int tx = 0; tx < g; ++tx) {
        const int y0 = ty * H / g, y1 = (ty + 1) * H / g, x0 = tx * W / g, x1 = (tx + 1) * W / g;
        if (y1 > y0 && x1 > x0) out.push_back({y0, x0, y1 - y0, x1 - x0});
      }
  }
  if (out.empty()) out.push_back({0, 0, H, W});
  if (out.size() > static_cast<std::size_t>(max_regions)) out.resize(static_cast<std::size_t>(max_regions));
  return out;
}

// ---------------------------------------------------------------- LexiconCandidateOracle

std::vector<std::string> LexiconCandidateOracle::ranked_candidates(const TextSample& text, std::size_t position,
                                                                   int limit) const {
  auto it = lexicon_.find(text.tokens()[position]);
  if (it == lexicon_.end()) return {};
  const auto& words = it->second;
  return {words.begin(), words.begin() + std::min<std::size_t>(words.size(), static_cast<std::size_t>(limit))};
}

}  // namespace badcm
