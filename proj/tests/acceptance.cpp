// Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include <spdlog/spdlog.h>

#include "badcm/evaluator.hpp"
#include "badcm/mining.hpp"
#include "badcm/pipeline.hpp"
#include "badcm/poisoner.hpp"
#include "badcm/textual_trigger.hpp"
#include "badcm/toy_dataset.hpp"
#include "badcm/visual_trigger.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace badcm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

InvariantMask box_mask(int H, int W, RegionProposal box) {
  const RegionProposal b[] = {box};
  return InvariantMask::from_boxes(H, W, b);
}

// 1 ---------------------------------------------------------------------------
Outcome dp_oracle() {
  const auto t0 = Clock::now();
  Rng rng(101);
  int mismatches = 0, over_budget = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int H = 8 + static_cast<int>(rng.below(41)), W = 8 + static_cast<int>(rng.below(41));
    const int n = 1 + static_cast<int>(rng.below(12));
    std::vector<ScoredRegion> scored;
    for (int i = 0; i < n; ++i) {
      const int h = 1 + static_cast<int>(rng.below(H / 2)), w = 1 + static_cast<int>(rng.below(W / 2));
      scored.push_back({{static_cast<int>(rng.below(H - h + 1)), static_cast<int>(rng.below(W - w + 1)), h, w},
                        rng.uniform()});
    }
    const long budget = pixel_budget(H, W, 0.30);
    // Default deduplication: exhaustive search over the boxes that survive it.
    const auto m = select_regions_dp(scored, H, W);
    std::vector<long> w;
    std::vector<double> v;
    for (auto i : deduplicate_regions(scored, 0.90)) {
      w.push_back(scored[i].region.area());
      v.push_back(scored[i].importance);
    }
    if (m.objective != oracle::knapsack_exhaustive(w, v, budget)) ++mismatches;
    if (m.popcount() > budget) ++over_budget;
    // Deduplication off: exhaustive search over every box.
    const auto all = select_regions_dp(scored, H, W, 0.30, 1.0);
    w.clear();
    v.clear();
    for (const auto& s : scored) {
      w.push_back(s.region.area());
      v.push_back(s.importance);
    }
    if (all.objective != oracle::knapsack_exhaustive(w, v, budget)) ++mismatches;
    if (all.popcount() > budget) ++over_budget;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && over_budget == 0 && secs < 30.0,
          fmt("500 instances, %d objective mismatches, %d over budget, %.2f s", mismatches, over_budget, secs)};
}

// 2 ---------------------------------------------------------------------------
Outcome mining_oracle() {
  const ToyImageEmbedder ie;
  const ToyTextEmbedder te;
  const GridRegionProposer grid;
  Rng rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int size = 8 * (1 + static_cast<int>(rng.below(4)));
    const auto img = badcm::testing::blob_image(rng, size, size);
    const auto text = badcm::testing::random_text(rng, 4 + static_cast<int>(rng.below(8)));
    const auto regions = grid.propose_regions(img, 20);
    const std::array<double, 3> fill{rng.uniform(), rng.uniform(), rng.uniform()};
    const auto scored = visual_importance(img, text, regions, ie, te, fill);
    const auto expected = oracle::visual_scores(img, text, regions, ie, te, fill);
    if (scored.size() != expected.size()) return {false, "visual score count differs"};
    for (std::size_t i = 0; i < scored.size(); ++i) worst = std::max(worst, std::abs(scored[i].importance - expected[i]));

    const auto ts = textual_importance(text, img, ie, te);
    const auto te_expected = oracle::textual_scores(text, img, ie, te);
    if (ts.scores.size() != te_expected.size()) return {false, "textual score count differs"};
    for (std::size_t i = 0; i < ts.scores.size(); ++i) worst = std::max(worst, std::abs(ts.scores[i] - te_expected[i]));
  }
  return {worst <= 1e-12, fmt("50 visual + 50 textual fixtures, max deviation %.3g", worst)};
}

// 3 ---------------------------------------------------------------------------
Outcome loss_identities() {
  const ToyImageEmbedder e;
  const DiscriminatorNet d(4, 6);
  const TriggerTrainConfig cfg;  // alpha 5, beta 5e-3, gamma 1
  if (cfg.alpha != 5.0 || cfg.beta != 5e-3 || cfg.gamma != 1.0) return {false, "default weights differ"};
  Rng rng(303);
  int failures = 0;
  double worst_total = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto img = badcm::testing::blob_image(rng, 16, 16);
    const int top = static_cast<int>(rng.below(8)), left = static_cast<int>(rng.below(8));
    const auto mask = box_mask(16, 16, {top, left, 8, 8});
    const auto ref = compose_reference(img, PatchTrigger::default_for(16, 16));
    const std::vector<double> zero(img.pixels().size(), 0.0);
    const auto z = compute_losses(img, img, zero, mask, ref, d, e, cfg);
    if (z.rec != 0.0 || z.reg != 0.0) ++failures;
    const auto same = compute_losses(img, img, zero, mask, img, d, e, cfg);
    if (std::abs(same.fea) > 1e-15) ++failures;

    std::vector<double> delta(zero);
    std::vector<double> px(img.pixels().begin(), img.pixels().end());
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        if (mask.contains(y, x))
          for (int c = 0; c < 3; ++c) {
            const auto i = img.index(y, x, c);
            delta[i] = rng.uniform(-0.2, 0.2);
            px[i] = std::clamp(px[i] + delta[i], 0.0, 1.0);
          }
    const auto l = compute_losses(img, ImageSample(16, 16, px), delta, mask, ref, d, e, cfg);
    if (l.reg != 0.0) ++failures;
    worst_total = std::max(worst_total, std::abs(l.total - (l.rec + 5.0 * l.reg + 5e-3 * l.adv_g + 1.0 * l.fea)));
  }
  return {failures == 0 && worst_total <= 1e-10,
          fmt("50 fixtures, %d identity failures, max decomposition error %.3g", failures, worst_total)};
}

// 4 ---------------------------------------------------------------------------
Outcome gradient_check() {
  const auto t0 = Clock::now();
  const GeneratorNet g(2, 8, false);
  const DiscriminatorNet d(2, 8);
  const ToyImageEmbedder e;
  const TriggerTrainConfig cfg;
  Rng rng(404);
  std::vector<double> imgs, in, m3, ref;
  for (int n = 0; n < 2; ++n) {
    std::vector<double> px(8 * 8 * 3);
    for (double& v : px) v = rng.uniform(0.3, 0.7);
    const ImageSample img(8, 8, px);
    const auto mask = box_mask(8, 8, {n, 1, 4, 5});
    const auto chw = img.to_chw();
    imgs.insert(imgs.end(), chw.begin(), chw.end());
    in.insert(in.end(), chw.begin(), chw.end());
    in.insert(in.end(), mask.mask.begin(), mask.mask.end());
    for (int c = 0; c < 3; ++c) m3.insert(m3.end(), mask.mask.begin(), mask.mask.end());
    const auto r = e.embed_image(compose_reference(img, PatchTrigger::checker(8, 8, 2))).values;
    ref.insert(ref.end(), r.begin(), r.end());
  }
  const auto images = ag::Var::constant({2, 3, 8, 8}, imgs);
  const auto input = ag::Var::constant({2, 4, 8, 8}, in);
  const auto mask3 = ag::Var::constant({2, 3, 8, 8}, m3);
  const auto refv = ag::Var::constant({2, 64}, ref);
  auto loss = [&] {
    const auto delta = g.forward(input);
    const auto poisoned = ag::clamp(ag::add(images, delta), 0.0, 1.0);
    return generator_loss(images, poisoned, delta, mask3, refv, d, e, cfg).total;
  };
  std::vector<ag::Var> params;
  for (const auto& p : g.parameters()) params.push_back(p.var);
  // Entries below 1e-4 are held to an absolute error of 1e-8.
  const auto r = badcm::testing::gradient_check(loss, params, 1e-6, 1e-4);
  const double secs = seconds_since(t0);
  const auto count = nn::parameter_count(g.parameters());
  return {r.max_rel_error < 1e-4 && count <= 1000 && secs < 60.0,
          fmt("%zu parameters, max relative error %.3g, %.2f s", count, r.max_rel_error, secs)};
}

// 5 ---------------------------------------------------------------------------
Outcome greedy_conformance() {
  const ToyTextEmbedder te;
  Rng rng(505);
  int fixtures = 0, replay_mismatch = 0, monotone = 0, early_mismatch = 0, locality = 0, bound = 0, enumerated = 0;
  int early = 0;
  while (fixtures < 100) {
    auto f = badcm::testing::greedy_fixture(rng);
    if (f.keywords.positions.empty()) continue;
    f.config.s_target = 0.7;
    ++fixtures;
    const badcm::testing::TableOracle co(f.table);
    const auto r = greedy_substitute(f.text, f.keywords, f.config, te, co);

    std::vector<oracle::ReplayStep> replay;
    bool replay_terminated = false;
    for (const auto& s : oracle::greedy_replay(f.text, f.keywords, f.config, te, co)) {
      replay_terminated = replay_terminated || s.terminate;
      if (!s.chosen.empty()) replay.push_back(s);
    }
    bool same = r.trace.steps.size() == replay.size() && r.trace.terminated_early == replay_terminated;
    for (std::size_t i = 0; same && i < replay.size(); ++i)
      same = r.trace.steps[i].position == replay[i].position && r.trace.steps[i].chosen == replay[i].chosen &&
             std::abs(r.trace.steps[i].score - replay[i].s_best) < 1e-12;
    if (!same) ++replay_mismatch;

    for (std::size_t i = 1; i < r.trace.steps.size(); ++i)
      if (!(r.trace.steps[i].score > r.trace.steps[i - 1].score)) ++monotone;
    if (r.trace.terminated_early != (r.trace.s_best >= 0.7)) ++early_mismatch;
    early += r.trace.terminated_early;
    const std::set<std::size_t> kw(f.keywords.positions.begin(), f.keywords.positions.end());
    for (std::size_t i = 0; i < f.text.size(); ++i)
      if (f.text.tokens()[i] != r.poisoned.tokens()[i] && !kw.count(i)) ++locality;

    std::size_t combos = 0;
    const double best = oracle::exhaustive_text_best(f.text, f.keywords, f.config, te, co, &combos);
    if (combos <= 256) {
      ++enumerated;
      const double achieved =
          oracle::cosine(te.embed_text(r.poisoned).values,
                         te.embed_text(build_explicit_poison(f.text, f.keywords, f.config.rare_word)).values);
      if (achieved > best + 1e-12) ++bound;
    }
  }
  const bool ok = replay_mismatch == 0 && monotone == 0 && early_mismatch == 0 && locality == 0 && bound == 0;
  return {ok, fmt("100 fixtures (%d stopped early), replay mismatches %d, monotonicity %d, early-stop %d, "
                  "locality %d, exhaustive bound %d of %d",
                  early, replay_mismatch, monotone, early_mismatch, locality, bound, enumerated)};
}

// 6 ---------------------------------------------------------------------------
Outcome metric_oracles() {
  const std::vector<std::uint8_t> r101{1, 0, 1};
  const double ap = average_precision(r101, 3);
  bool ok = std::abs(ap - 0.8333333333333334) <= 1e-9;
  ok = ok && average_precision(std::vector<std::uint8_t>{1, 1, 1}, 3) == 1.0;
  ok = ok && average_precision(std::vector<std::uint8_t>{0, 0, 0}, 3) == 0.0;

  Rng rng(606);
  const auto a = badcm::testing::random_image(rng, 16, 16);
  const auto q = image_quality(a, a);
  const std::string row = format_psnr(q.psnr) + " " + fmt("%.3f %.2f", q.ssim, q.mse);
  ok = ok && row == "INF 1.000 0.00";

  int asym = 0, ssim_self = 0;
  for (int i = 0; i < 100; ++i) {
    const int h = 4 + static_cast<int>(rng.below(29)), w = 4 + static_cast<int>(rng.below(29));
    const auto x = badcm::testing::random_image(rng, h, w);
    const auto y = badcm::testing::random_image(rng, h, w);
    if (mse_255(x, y) != mse_255(y, x)) ++asym;
    if (ssim(x, x) != 1.0) ++ssim_self;
  }
  ok = ok && asym == 0 && ssim_self == 0;
  return {ok, fmt("AP[1,0,1]=%.10f, identical images -> %s, 100 pairs: %d asymmetric mse, %d ssim(a,a)!=1", ap,
                  row.c_str(), asym, ssim_self)};
}

// 7 ---------------------------------------------------------------------------
Outcome poisoning_protocol() {
  ToyDatasetOptions o;
  o.count = 200;
  o.image_size = 8;
  o.seed = 77;
  const auto train = generate_toy_dataset(o);
  const ToyImageEmbedder ie;
  const ToyTextEmbedder te;
  const GridRegionProposer grid;
  const LexiconCandidateOracle lex;
  const SurrogateSet s{&ie, &te, &grid, &lex};
  std::map<std::string, MiningRecord> mining;
  for (const auto& inst : train.instances) mining.emplace(inst.id, mine_instance(inst, s, MiningConfig{}));
  const GeneratorNet g(2, 3, false);
  const auto target = LabelVector::single(train.categories, 2);

  int count_errors = 0, isolation = 0, labels = 0;
  for (auto scenario : {AttackScenario::V2L, AttackScenario::L2V, AttackScenario::DualKey}) {
    const auto plan = plan_poison(train, target, 0.05, scenario, 13);
    const auto out = apply_poison(plan, train, mining, &g, TextPoisonConfig{}, s);
    if (plan.victim_ids.size() != 10 || out.records.size() != 10) ++count_errors;
    if (out.manifest.instances.size() != train.instances.size()) ++count_errors;
    std::set<std::string> victims;
    for (const auto& r : out.records) victims.insert(r.id);
    for (std::size_t i = 0; i < train.instances.size(); ++i) {
      const auto& b = train.instances[i];
      const auto& a = out.manifest.instances[i];
      if (victims.count(b.id)) {
        if (a.label != target) ++labels;
        continue;
      }
      if (a.id != b.id || a.label != b.label || a.text.raw() != b.text.raw() || !(a.image.get() == b.image.get()))
        ++isolation;
    }
    for (const auto& r : out.records)
      if (r.assigned_label != target) ++labels;
  }
  for (std::size_t n : {20u, 99u, 100u, 1000u, 12345u})
    if (victim_count(n, 0.05) != static_cast<std::size_t>(std::floor(0.05 * static_cast<double>(n) + 1e-9)))
      ++count_errors;
  return {count_errors == 0 && isolation == 0 && labels == 0,
          fmt("N=200 p=0.05 over V2L/L2V/DualKey: %d count errors, %d touched non-victims, %d wrong labels",
              count_errors, isolation, labels)};
}

// 8, 9, 10 ----------------------------------------------------------------------
struct SeedRun {
  double asr = 0, baseline_asr = 0, prior = 0, ba = 0, baseline_ba = 0, secs = 0;
};

SeedRun run_seed(const fs::path& config_path, std::uint64_t seed, const fs::path& run_dir) {
  auto config = load_run_config(config_path);
  config.seed = seed;
  fs::remove_all(run_dir);
  const auto t0 = Clock::now();
  const auto results = run_pipeline(config, RunPaths{run_dir});
  SeedRun r;
  r.secs = seconds_since(t0);
  for (const auto& e : results) {
    r.asr += e.poisoned.asr;
    r.baseline_asr += e.baseline.asr;
    r.prior += e.poisoned.target_prior;
    r.ba += e.poisoned.ba_avg;
    r.baseline_ba += e.baseline.ba_avg;
  }
  const double n = static_cast<double>(results.size());
  r.asr /= n;
  r.baseline_asr /= n;
  r.prior /= n;
  r.ba /= n;
  r.baseline_ba /= n;
  return r;
}

Outcome end_to_end(const fs::path& config, const fs::path& scratch, const std::string& tag, double min_gain) {
  double gain = 0, drop = 0, secs = 0, prior = 0, base = 0;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto r = run_seed(config, seed, scratch / (tag + "-seed" + std::to_string(seed)));
    gain += r.asr - r.baseline_asr;
    drop += r.baseline_ba - r.ba;
    secs += r.secs;
    prior += r.prior;
    base += r.baseline_asr;
    per_seed += fmt(" s%d: ASR %.3f vs %.3f, BA %.3f vs %.3f;", static_cast<int>(seed), r.asr, r.baseline_asr, r.ba,
                    r.baseline_ba);
  }
  gain /= 3;
  drop /= 3;
  prior /= 3;
  base /= 3;
  return {gain >= min_gain && drop <= 0.05 && secs < 15 * 60,
          fmt("mean ASR gain %.3f (need >= %.1f), mean BA drop %.4f (need <= 0.05), clean ASR %.3f, target prior "
              "%.3f, %.0f s;",
              gain, min_gain, drop, base, prior, secs) +
              per_seed};
}

Outcome determinism(const fs::path& config, const fs::path& scratch) {
  // The first run is the seed-1 directory from criterion 8.
  const auto a = scratch / "v2l-seed1";
  const auto b = scratch / "v2l-repeat";
  if (!fs::exists(a / "report.txt")) run_seed(config, 1, a);
  run_seed(config, 1, b);
  std::vector<std::string> files{"report.txt", "train-trigger/generator.ckpt", "clean-victim/victim.ckpt"};
  for (const auto& t : load_run_config(config).targets) {
    const std::string dir = "targets/" + std::to_string(t) + "/";
    files.push_back(dir + "evaluate/report.txt");
    files.push_back(dir + "evaluate/baseline_report.txt");
    files.push_back(dir + "poison/manifest.jsonl");
    files.push_back(dir + "train-victim/victim.ckpt");
  }
  int differing = 0;
  std::string which;
  for (const auto& f : files) {
    const auto x = read_file(a / f);
    if (x.empty() || x != read_file(b / f)) {
      ++differing;
      which += " " + f;
    }
  }
  return {differing == 0, fmt("%zu artifacts compared across two V2L seed-1 runs, %d differ", files.size(), differing) +
                              which};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const fs::path source = BADCM_SOURCE_DIR;
  const auto v2l = source / "configs" / "toy_v2l.json";
  const auto l2v = source / "configs" / "toy_l2v.json";
  badcm::testing::TempDir scratch("acceptance");

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"DP-oracle equivalence", dp_oracle},
      {"mining-oracle equivalence", mining_oracle},
      {"loss identities", loss_identities},
      {"gradient check", gradient_check},
      {"greedy substitution conformance", greedy_conformance},
      {"metric oracles", metric_oracles},
      {"poisoning protocol", poisoning_protocol},
      {"V2L desk-scale attack", [&] { return end_to_end(v2l, scratch.path(), "v2l", 0.3); }},
      {"L2V desk-scale attack", [&] { return end_to_end(l2v, scratch.path(), "l2v", 0.2); }},
      {"determinism", [&] { return determinism(v2l, scratch.path()); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %zu (%s): %s: %s\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
