#include <doctest.h>

#include <numeric>

#include "badcm/evaluator.hpp"
#include "badcm/textual_trigger.hpp"
#include "badcm/toy_dataset.hpp"
#include "badcm/toy_victim.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace badcm;

namespace {

double ap(std::vector<std::uint8_t> rel, std::size_t k) { return average_precision(rel, k); }

ImageSample constant_image(int h, int w, double v) {
  return ImageSample(h, w, std::vector<double>(static_cast<std::size_t>(h) * w * 3, v));
}

}  // namespace

TEST_CASE("average precision fixtures") {
  CHECK(ap({1, 1, 1}, 3) == 1.0);
  CHECK(ap({0, 0, 0}, 3) == 0.0);
  CHECK(std::abs(ap({1, 0, 1}, 3) - 5.0 / 6.0) < 1e-9);
  CHECK(ap({0, 1}, 1) == 0.0);
  CHECK(ap({1, 0, 1}, 1) == 1.0);
  CHECK(ap({}, 3) == 0.0);
}

TEST_CASE("average precision properties") {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> rel(1 + rng.below(30));
    for (int& r : rel) r = rng.uniform() < 0.4;
    const std::size_t k = 1 + rng.below(rel.size());
    const std::vector<std::uint8_t> r8(rel.begin(), rel.end());
    const double a = average_precision(r8, k);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    CHECK(std::abs(a - oracle::average_precision(rel, k)) < 1e-12);
    // An irrelevant item inserted at the top never helps.
    auto worse = r8;
    worse.insert(worse.begin(), 0);
    CHECK(average_precision(worse, k) <= a + 1e-15);
  }
}

TEST_CASE("ranking ties fall back to database id") {
  const std::vector<double> q{1.0, 0.0};
  const std::vector<std::vector<double>> db{{1, 0}, {0, 1}, {2, 0}};
  const std::vector<std::string> ids{"c", "a", "b"};
  const auto order = rank_database(q, db, ids);
  CHECK(order == std::vector<std::size_t>{2, 0, 1});
}

TEST_CASE("map_at_k matches a brute-force oracle") {
  Rng rng(2);
  const auto m = badcm::testing::random_manifest(rng, 70, 5, 4);
  RetrievalSet queries, db;
  for (int i = 0; i < 20; ++i) {
    queries.ids.push_back(m.instances[i].id);
    queries.embeddings.push_back(badcm::testing::random_vector(rng, 6));
  }
  for (int i = 20; i < 70; ++i) {
    db.ids.push_back(m.instances[i].id);
    db.embeddings.push_back(badcm::testing::random_vector(rng, 6));
  }
  const auto share = [&](std::size_t q, std::size_t d) {
    return m.instances[q].label.intersects(m.instances[20 + d].label);
  };
  for (std::size_t k : {5u, 17u, 50u, 5000u}) {
    double total = 0;
    for (std::size_t q = 0; q < 20; ++q) {
      std::vector<std::size_t> idx(50);
      std::iota(idx.begin(), idx.end(), 0);
      std::vector<double> s(50);
      for (std::size_t d = 0; d < 50; ++d) s[d] = oracle::cosine(queries.embeddings[q], db.embeddings[d]);
      std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s[a] != s[b] ? s[a] > s[b] : db.ids[a] < db.ids[b]; });
      std::vector<int> rel;
      for (auto d : idx) rel.push_back(share(q, d));
      total += oracle::average_precision(rel, k);
    }
    CHECK(std::abs(map_at_k(queries, db, share, k) - total / 20.0) < 1e-12);
  }
  // Permuting queries leaves MAP unchanged.
  RetrievalSet rev{{queries.ids.rbegin(), queries.ids.rend()}, {queries.embeddings.rbegin(), queries.embeddings.rend()}};
  const auto share_rev = [&](std::size_t q, std::size_t d) { return share(19 - q, d); };
  CHECK(std::abs(map_at_k(rev, db, share_rev, 50) - map_at_k(queries, db, share, 50)) < 1e-12);
  CHECK_THROWS_AS(map_at_k(RetrievalSet{}, db, share, 50), ValidationError);
}

TEST_CASE("map_at_k degenerate cases") {
  RetrievalSet q{{"q"}, {{1.0, 2.0}}};
  RetrievalSet dup{{"a", "b", "c"}, {{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}}};
  CHECK(map_at_k(q, dup, [](auto, auto) { return true; }, 5000) == 1.0);
  Rng rng(3);
  RetrievalSet db;
  for (int i = 0; i < 30; ++i) {
    db.ids.push_back("d" + std::to_string(i));
    db.embeddings.push_back(badcm::testing::random_vector(rng, 2));
  }
  // Every database item carries the target: t-MAP and MAP both reach 1.
  CHECK(map_at_k(q, db, [](auto, auto) { return true; }, 10) == 1.0);
  CHECK(map_at_k(q, db, [](auto, auto) { return false; }, 10) == 0.0);
}

TEST_CASE("image quality fixtures") {
  Rng rng(4);
  const auto a = badcm::testing::random_image(rng, 16, 16);
  const auto same = image_quality(a, a);
  CHECK(same.psnr_infinite());
  CHECK(format_psnr(same.psnr) == "INF");
  CHECK(same.ssim == 1.0);
  CHECK(same.mse == 0.0);

  std::vector<double> px(a.pixels().begin(), a.pixels().end());
  for (double& v : px) v = std::round(v * 254.0) / 255.0;
  const ImageSample base(16, 16, px);
  for (double& v : px) v += 1.0 / 255.0;
  const ImageSample shifted(16, 16, px);
  double loop = 0;
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double d = 255.0 * (shifted.pixels()[i] - base.pixels()[i]);
    loop += d * d;
  }
  CHECK(std::abs(mse_255(base, shifted) - loop / static_cast<double>(px.size())) < 1e-12);
  CHECK(std::abs(mse_255(base, shifted) - 1.0) < 1e-9);

  const auto black = constant_image(8, 8, 0.0), white = constant_image(8, 8, 1.0);
  CHECK(std::abs(image_quality(black, white).psnr) < 1e-12);
  CHECK(format_psnr(40.854) == "40.85");
  CHECK_THROWS_AS(image_quality(black, constant_image(8, 4, 0.0)), ValidationError);
}

TEST_CASE("image quality symmetry") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const int h = 4 + static_cast<int>(rng.below(20)), w = 4 + static_cast<int>(rng.below(20));
    const auto a = badcm::testing::random_image(rng, h, w);
    const auto b = badcm::testing::random_image(rng, h, w);
    CHECK(mse_255(a, b) == mse_255(b, a));
    CHECK(ssim(a, a) == 1.0);
    const double s = ssim(a, b);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("semantic similarity") {
  const ToyTextEmbedder te;
  const TextSample t("a young man rides a brown horse on the beach");
  CHECK(std::abs(semantic_similarity(t, t, te) - 1.0) < 1e-12);

  KeywordSelection kw;
  kw.positions = {2, 6};
  kw.scores = {1.0, 0.9};
  const auto greedy = greedy_substitute(t, kw, TextPoisonConfig{}, te, LexiconCandidateOracle{});
  const auto explicit_poison = build_explicit_poison(t, kw, "cf");
  CHECK(semantic_similarity(greedy.poisoned, t, te) > semantic_similarity(explicit_poison, t, te));

  const std::vector<std::pair<std::string, std::string>> unrelated{
      {"a red car parked near the station", "two cats sleep on a blanket"},
      {"green apples in a wooden basket", "a pilot walks across the runway"},
      {"children play football in the park", "a bowl of hot soup"}};
  for (const auto& [a, b] : unrelated) CHECK(semantic_similarity(TextSample(a), TextSample(b), te) < 0.5);
}

TEST_CASE("text edit proxies") {
  const TextSample a("a man rides a horse"), b("a guy rides a pony"), c("a man rides");
  CHECK(substitution_count(a, b) == 2);
  CHECK(substitution_count(a, a) == 0);
  CHECK(word_edit_distance(a, c) == 2);
  CHECK(substitution_count(a, c) == 2);
}

TEST_CASE("attack report text is stable") {
  AttackReport r;
  r.scenario = "V2L";
  r.asr_direction = "I2T";
  r.asr = 0.5;
  const auto text = r.to_text();
  CHECK(text == r.to_text());
  CHECK(text.find("asr=0.500000") != std::string::npos);
  CHECK(text.find("scenario=V2L") != std::string::npos);
}

TEST_CASE("toy dataset") {
  ToyDatasetOptions o;
  o.count = 80;
  o.image_size = 16;
  const auto a = generate_toy_dataset(o);
  const auto b = generate_toy_dataset(o);
  CHECK(a.categories == 8);
  REQUIRE(a.instances.size() == 80);
  for (std::size_t i = 0; i < a.instances.size(); ++i) {
    CHECK(a.instances[i].image.get() == b.instances[i].image.get());
    CHECK(a.instances[i].text == b.instances[i].text);
    CHECK(a.instances[i].label.popcount() >= 1);
    CHECK(a.instances[i].image.get().height() == 16);
  }
  // Every caption mentions the noun of each of its categories.
  for (const auto& inst : a.instances)
    for (int c = 0; c < 8; ++c)
      if (inst.label.test(c)) CHECK(inst.text.raw().find(toy_categories()[c].noun) != std::string::npos);

  badcm::testing::TempDir dir("toyds");
  const auto path = write_toy_dataset(dir.path(), o);
  const auto loaded = load_manifest(path, {});
  CHECK(loaded.instances.size() == 80);
  CHECK(loaded.instances[3].text == a.instances[3].text);
}

TEST_CASE("toy victim training and reports") {
  ToyDatasetOptions o;
  o.count = 200;
  o.image_size = 16;
  o.seed = 8;
  const auto all = generate_toy_dataset(o);
  DatasetManifest train, query, db;
  train.categories = query.categories = db.categories = all.categories;
  for (std::size_t i = 0; i < all.instances.size(); ++i)
    (i < 120 ? train : i < 150 ? query : db).instances.push_back(all.instances[i]);

  const ToyImageEmbedder ie;
  const ToyTextEmbedder te;
  const FeatureSpace space{&ie, &te};
  VictimConfig c;
  c.epochs = 1;
  c.batch_size = 32;
  const auto one = train_toy_victim(train, space, c, 3);
  CHECK(one.steps == 4);  // ceil(120 / 32)
  CHECK(one.epoch_loss.size() == 1);

  c.epochs = 30;
  const auto v1 = train_toy_victim(train, space, c, 3);
  const auto v2 = train_toy_victim(train, space, c, 3);
  CHECK(nn::checksum(v1.victim.parameters()) == nn::checksum(v2.victim.parameters()));

  auto shuffled = train;
  Rng rng(9);
  for (std::size_t i = shuffled.instances.size(); i > 1; --i)
    std::swap(shuffled.instances[i - 1].label, shuffled.instances[rng.below(i)].label);
  const auto control = train_toy_victim(shuffled, space, c, 3);

  const auto clean = attack_report(v1.victim, space, query, query, db, 0, 50, AttackScenario::V2L);
  const auto ctrl = attack_report(control.victim, space, query, query, db, 0, 50, AttackScenario::V2L);
  CHECK(clean.ba_avg > ctrl.ba_avg + 0.1);
  CHECK(clean.ba_avg == 0.5 * (clean.ba_i2t + clean.ba_t2i));
  CHECK(clean.dual_key_as_v2l == false);
  CHECK(clean.asr_direction == "I2T");
  // No backdoor: triggered queries land no better than chance on the target.
  CHECK(clean.asr <= clean.target_prior + 0.1);
  CHECK(clean.image_pairs == query.instances.size());
  CHECK(clean.psnr_infinite == query.instances.size());

  const auto t2i = attack_report(v1.victim, space, query, query, db, 0, 50, AttackScenario::L2V);
  CHECK(t2i.asr_direction == "T2I");
  CHECK(attack_report(v1.victim, space, query, query, db, 0, 50, AttackScenario::DualKey).dual_key_as_v2l);

  // Target absent from the database.
  auto no_target = db;
  std::erase_if(no_target.instances, [](const auto& i) { return i.label.test(0); });
  const auto absent = attack_report(v1.victim, space, query, query, no_target, 0, 50, AttackScenario::V2L);
  CHECK(absent.target_prior == 0.0);
  CHECK(absent.asr == 0.0);

  CHECK_THROWS_AS(attack_report(v1.victim, space, query, db, db, 0, 50, AttackScenario::V2L), ValidationError);
  CHECK_THROWS_AS(attack_report(v1.victim, space, query, query, db, 8, 50, AttackScenario::V2L), ValidationError);

  badcm::testing::TempDir dir("victim");
  v1.victim.save(dir / "v.ckpt");
  const auto back = ToyVictim::load(dir / "v.ckpt");
  CHECK(nn::checksum(back.parameters()) == nn::checksum(v1.victim.parameters()));
  const auto f = extract_features(query, space);
  CHECK(back.embed_images(f.image) == v1.victim.embed_images(f.image));
}

TEST_CASE("victim config validation") {
  VictimConfig c;
  c.temperature = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK_THROWS_AS(train_toy_victim(PairFeatures{}, {}, 2, VictimConfig{}, 1), ValidationError);
}
