#include <doctest.h>

#include <algorithm>
#include <set>

#include "badcm/mining.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace badcm;

namespace {

std::vector<ScoredRegion> random_scored(Rng& rng, int n, int H, int W) {
  std::vector<ScoredRegion> out;
  for (int i = 0; i < n; ++i) {
    const int h = 1 + static_cast<int>(rng.below(H / 2)), w = 1 + static_cast<int>(rng.below(W / 2));
    const int top = static_cast<int>(rng.below(H - h + 1)), left = static_cast<int>(rng.below(W - w + 1));
    out.push_back({{top, left, h, w}, rng.uniform(0.0, 1.0)});
  }
  return out;
}

/// Image embedder that ignores everything but the top-left pixel.
class CornerEmbedder final : public ImageEmbedder {
 public:
  int dimension() const override { return 3; }
  EmbeddingVector embed_image(const ImageSample& im) const override {
    return {{im.at(0, 0, 0) + 1.0, im.at(0, 0, 1) + 1.0, im.at(0, 0, 2) + 1.0}};
  }
  std::uint64_t checksum() const override { return 1; }
};

/// Text embedder returning a fixed vector.
class ConstantTextEmbedder final : public TextEmbedder {
 public:
  explicit ConstantTextEmbedder(std::vector<double> v) : v_(std::move(v)) {}
  int dimension() const override { return static_cast<int>(v_.size()); }
  EmbeddingVector embed_text(const TextSample&) const override { return {v_}; }

 private:
  std::vector<double> v_;
};

}  // namespace

TEST_CASE("knapsack fixtures") {
  const std::vector<long> w{3, 4, 5};
  const std::vector<double> v{0.4, 0.5, 0.8};
  auto all = solve_knapsack(w, v, 12);
  CHECK(all.chosen == std::vector<std::size_t>{0, 1, 2});
  CHECK(solve_knapsack(w, v, 2).chosen.empty());
  auto s = solve_knapsack(w, v, 8);
  CHECK(s.chosen == std::vector<std::size_t>{0, 2});
  CHECK(s.value == doctest::Approx(1.2));
  CHECK_THROWS_AS(solve_knapsack(std::vector<long>{1}, std::vector<double>{}, 3), ValidationError);
}

TEST_CASE("knapsack property: equals exhaustive search") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(10));
    std::vector<long> w;
    std::vector<double> v;
    for (int i = 0; i < n; ++i) {
      w.push_back(1 + static_cast<long>(rng.below(30)));
      v.push_back(rng.uniform());
    }
    const long cap = static_cast<long>(rng.below(80));
    const auto sol = solve_knapsack(w, v, cap);
    long used = 0;
    for (auto i : sol.chosen) used += w[i];
    CHECK(used <= cap);
    CHECK(sol.value == oracle::knapsack_exhaustive(w, v, cap));
  }
}

TEST_CASE("pixel budget") {
  CHECK(pixel_budget(224, 224, 0.30) == 15052);
  CHECK(pixel_budget(32, 32, 0.30) == 307);
  CHECK(pixel_budget(10, 10, 0.30) == 30);
}

TEST_CASE("select_regions_dp: all regions fit") {
  std::vector<ScoredRegion> s{{{0, 0, 2, 2}, 0.3}, {{5, 5, 2, 2}, 0.1}};
  const auto m = select_regions_dp(s, 10, 10);
  CHECK(m.selected.size() == 2);
  CHECK(m.popcount() == 8);
  CHECK_FALSE(m.nothing_fits);
}

TEST_CASE("select_regions_dp: budget smaller than every region") {
  std::vector<ScoredRegion> s{{{0, 0, 6, 6}, 0.3}, {{2, 2, 8, 8}, 0.9}};
  const auto m = select_regions_dp(s, 10, 10);
  CHECK(m.selected.empty());
  CHECK(m.popcount() == 0);
  CHECK(m.nothing_fits);
}

TEST_CASE("select_regions_dp validates its input") {
  CHECK_THROWS_AS(select_regions_dp({}, 10, 10), ValidationError);
  std::vector<ScoredRegion> s{{{0, 0, 2, 2}, 0.3}};
  CHECK_THROWS_AS(select_regions_dp(s, 10, 10, 0.0), ValidationError);
  CHECK_THROWS_AS(select_regions_dp(s, 10, 10, 1.5), ValidationError);
  std::vector<ScoredRegion> outside{{{9, 9, 2, 2}, 0.3}};
  CHECK_THROWS_AS(select_regions_dp(outside, 10, 10), ValidationError);
}

TEST_CASE("deduplication keeps the better of two near-identical boxes") {
  std::vector<ScoredRegion> s{{{0, 0, 20, 20}, 0.2}, {{0, 0, 20, 19}, 0.5}, {{0, 0, 5, 5}, 0.1}};
  CHECK(deduplicate_regions(s, 0.9) == std::vector<std::size_t>{1, 2});
  CHECK(deduplicate_regions(s, 0.95) == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("select_regions_dp properties") {
  Rng rng(2);
  for (int trial = 0; trial < 150; ++trial) {
    const int H = 8 + static_cast<int>(rng.below(17)), W = 8 + static_cast<int>(rng.below(17));
    const auto scored = random_scored(rng, 1 + static_cast<int>(rng.below(12)), H, W);
    const auto m = select_regions_dp(scored, H, W);
    CHECK(m.popcount() <= pixel_budget(H, W, 0.30));
    CHECK(InvariantMask::from_boxes(H, W, m.selected).mask == m.mask);

    // Positive rescaling by a power of two keeps the chosen set.
    auto scaled = scored;
    for (auto& s : scaled) s.importance *= 4.0;
    CHECK(select_regions_dp(scaled, H, W).selected == m.selected);

    // Optimality against subset enumeration after deduplication.
    const auto kept = deduplicate_regions(scored, 0.90);
    std::vector<long> w;
    std::vector<double> v;
    for (auto i : kept) {
      w.push_back(scored[i].region.area());
      v.push_back(scored[i].importance);
    }
    CHECK(m.objective == oracle::knapsack_exhaustive(w, v, pixel_budget(H, W, 0.30)));
  }
}

TEST_CASE("select_regions_dp property: generic positive rescaling keeps the set") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto scored = random_scored(rng, 1 + static_cast<int>(rng.below(10)), 16, 16);
    auto scaled = scored;
    const double c = rng.uniform(0.1, 10.0);
    for (auto& s : scaled) s.importance *= c;
    CHECK(select_regions_dp(scaled, 16, 16).selected == select_regions_dp(scored, 16, 16).selected);
  }
}

TEST_CASE("visual importance matches the loop oracle") {
  const ToyImageEmbedder ie;
  const ToyTextEmbedder te;
  const GridRegionProposer grid;
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const auto img = badcm::testing::blob_image(rng, 16, 16);
    const auto text = badcm::testing::random_text(rng, 6);
    const auto regions = grid.propose_regions(img, 16);
    const std::array<double, 3> fill{0.4, 0.5, 0.6};
    const auto scored = visual_importance(img, text, regions, ie, te, fill);
    const auto expected = oracle::visual_scores(img, text, regions, ie, te, fill);
    REQUIRE(scored.size() == expected.size());
    for (std::size_t i = 0; i < scored.size(); ++i) {
      CHECK(scored[i].region == regions[i]);
      CHECK(std::abs(scored[i].importance - expected[i]) <= 1e-12);
    }
  }
}

TEST_CASE("visual importance: duplicates, permutations and an unchanged embedding") {
  const ToyImageEmbedder ie;
  const ToyTextEmbedder te;
  Rng rng(5);
  const auto img = badcm::testing::blob_image(rng, 16, 16);
  const TextSample text("a red apple");
  const std::vector<RegionProposal> dup{{0, 0, 4, 4}, {0, 0, 4, 4}};
  const auto s = visual_importance(img, text, dup, ie, te);
  CHECK(s[0].importance == s[1].importance);

  const auto regions = GridRegionProposer().propose_regions(img, 20);
  auto reversed = regions;
  std::reverse(reversed.begin(), reversed.end());
  const auto fwd = visual_importance(img, text, regions, ie, te);
  const auto rev = visual_importance(img, text, reversed, ie, te);
  for (std::size_t i = 0; i < regions.size(); ++i) CHECK(fwd[i].importance == rev[regions.size() - 1 - i].importance);

  // The corner embedder cannot see a region away from pixel (0,0), and its
  // embedding coincides with the text vector, so the importance is exactly 0.
  const CornerEmbedder corner;
  const auto flat = ImageSample::filled(8, 8, {0.0, 0.0, 0.0});
  const ConstantTextEmbedder same({1.0, 1.0, 1.0});
  const std::vector<RegionProposal> away{{4, 4, 2, 2}};
  CHECK(visual_importance(flat, text, away, corner, same)[0].importance == 0.0);
  CHECK_THROWS_AS(visual_importance(img, text, {}, ie, te), ValidationError);
}

TEST_CASE("textual importance matches the loop oracle") {
  const ToyImageEmbedder ie;
  const ToyTextEmbedder te;
  Rng rng(6);
  const auto img = badcm::testing::blob_image(rng, 16, 16);
  const TextSample text("a man rides a red bicycle");
  REQUIRE(text.size() == 6);
  const auto s = textual_importance(text, img, ie, te);
  const auto expected = oracle::textual_scores(text, img, ie, te);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(s.scores[i] - expected[i]) <= 1e-12);
  CHECK(s.ineligible == std::vector<bool>{true, false, false, true, false, false});
  CHECK(textual_importance(TextSample("dog"), img, ie, te).scores.size() == 1);
}

TEST_CASE("textual importance is zero when masking leaves the text vector unchanged") {
  // A constant text embedder ignores the mask; aligned with the image vector the score is exactly 0.
  const CornerEmbedder ie;
  const ConstantTextEmbedder te({1.0, 1.0, 1.0});
  const auto img = ImageSample::filled(4, 4, {0.0, 0.0, 0.0});
  const auto s = textual_importance(TextSample("red car"), img, ie, te);
  CHECK(s.scores == std::vector<double>{0.0, 0.0});
}

TEST_CASE("keyword selection") {
  SUBCASE("ratio arithmetic") {
    const TextSample t("man dog car red tree runs a the on of");
    REQUIRE(t.size() == 10);
    TokenScores sc{{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.9, 0.9, 0.9, 0.9}, {}};
    const auto k = select_keywords(sc, t, 0.4);
    CHECK(k.positions == std::vector<std::size_t>{5, 4, 3, 2});
    CHECK(k.scores == std::vector<double>{0.6, 0.5, 0.4, 0.3});
  }
  SUBCASE("all stop words") {
    const TextSample t("a the of");
    const auto k = select_keywords({{0.5, 0.5, 0.5}, {}}, t, 0.4);
    CHECK(k.positions.empty());
    CHECK(k.unpoisonable);
  }
  SUBCASE("tie broken by lower index") {
    const TextSample t("dog cat cow");
    const auto k = select_keywords({{0.5, 0.5, 0.1}, {}}, t, 0.4);
    CHECK(k.positions == std::vector<std::size_t>{0});
  }
  SUBCASE("quota never below one") {
    CHECK(keyword_quota(1, 0.4) == 1);
    CHECK(keyword_quota(10, 0.4) == 4);
    CHECK(keyword_quota(5, 0.4) == 2);
  }
  CHECK_THROWS_AS(select_keywords({{0.5}, {}}, TextSample("dog cat"), 0.4), ValidationError);
}

TEST_CASE("keyword selection properties") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto text = badcm::testing::random_text(rng, 1 + static_cast<int>(rng.below(15)));
    TokenScores sc;
    for (std::size_t i = 0; i < text.size(); ++i) sc.scores.push_back(rng.uniform());
    const auto k = select_keywords(sc, text, 0.4);
    CHECK(k.positions.size() <= std::max<std::size_t>(1, static_cast<std::size_t>(0.4 * text.size() + 1e-9)));
    for (std::size_t i = 0; i < k.positions.size(); ++i) {
      CHECK_FALSE(is_ineligible_token(text.tokens()[k.positions[i]]));
      if (i) CHECK(k.scores[i - 1] >= k.scores[i]);
    }
    std::set<std::size_t> uniq(k.positions.begin(), k.positions.end());
    CHECK(uniq.size() == k.positions.size());
  }
}

TEST_CASE("run-length codes") {
  const std::vector<std::uint8_t> m{1, 1, 0, 0, 0, 1, 0};
  CHECK(encode_rle(m) == std::vector<long>{0, 2, 3, 1, 1});
  CHECK(decode_rle(encode_rle(m), m.size()) == m);
  CHECK(encode_rle(std::vector<std::uint8_t>{}) == std::vector<long>{0});
  CHECK_THROWS_AS(decode_rle(std::vector<long>{3}, 4), ValidationError);
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::uint8_t> r(rng.below(100));
    for (auto& b : r) b = rng.uniform() < 0.3 ? 1 : 0;
    CHECK(decode_rle(encode_rle(r), r.size()) == r);
  }
}

TEST_CASE("mine_instance and the sidecar round trip") {
  const ToyImageEmbedder ie;
  const ToyTextEmbedder te;
  const GridRegionProposer grid;
  const LexiconCandidateOracle lex;
  const SurrogateSet s{&ie, &te, &grid, &lex};
  Rng rng(9);
  auto manifest = badcm::testing::random_manifest(rng, 4, 3, 16);
  manifest.instances[0].text = TextSample("the of a");
  std::vector<MiningRecord> recs;
  for (const auto& inst : manifest.instances) recs.push_back(mine_instance(inst, s, MiningConfig{}));
  CHECK(recs[0].keywords.unpoisonable);
  for (const auto& r : recs) {
    CHECK(r.mask.popcount() <= pixel_budget(16, 16, 0.30));
    CHECK(r.region_scores.size() == 20);
  }
  badcm::testing::TempDir dir("sidecar");
  write_mining_sidecar(dir / "m.jsonl", recs);
  const auto back = read_mining_sidecar(dir / "m.jsonl");
  REQUIRE(back.size() == recs.size());
  for (const auto& r : recs) {
    const auto& b = back.at(r.id);
    CHECK(b.mask.mask == r.mask.mask);
    CHECK(b.mask.selected == r.mask.selected);
    CHECK(b.mask.objective == r.mask.objective);
    CHECK(b.keywords.positions == r.keywords.positions);
    CHECK(b.keywords.scores == r.keywords.scores);
    CHECK(b.keywords.unpoisonable == r.keywords.unpoisonable);
    CHECK(b.token_scores == r.token_scores);
    CHECK(b.region_scores == r.region_scores);
  }
}

TEST_CASE("channel mean") {
  std::vector<ImageSample> imgs{ImageSample::filled(2, 2, {0.0, 0.5, 1.0}), ImageSample::filled(2, 2, {1.0, 0.5, 0.0})};
  const auto m = channel_mean(imgs);
  CHECK(m[0] == doctest::Approx(0.5));
  CHECK(m[1] == doctest::Approx(0.5));
  CHECK(m[2] == doctest::Approx(0.5));
  CHECK(channel_mean({}) == std::array<double, 3>{0.5, 0.5, 0.5});
}
