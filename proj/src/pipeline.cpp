#include "badcm/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "badcm/error.hpp"
#include "badcm/random.hpp"

namespace badcm {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- config

void RunConfig::validate() const {
  if (dataset.empty()) throw ValidationError("dataset: manifest path is required");
  if (image_size < 8 || image_size % 4 != 0) throw ValidationError("image_size: must be a multiple of 4, at least 8");
  split_sizes(100, split);  // validates the fractions
  if (targets.empty()) throw ValidationError("targets: at least one target label is required");
  for (int t : targets)
    if (t < 0) throw ValidationError("targets: label indices must be non-negative");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("ratio: must be in (0, 1)");
  if (!(mining.region_budget > 0.0 && mining.region_budget <= 1.0))
    throw ValidationError("mining.region_budget: must be in (0, 1]");
  if (!(mining.keyword_ratio > 0.0 && mining.keyword_ratio <= 1.0))
    throw ValidationError("mining.keyword_ratio: must be in (0, 1]");
  if (mining.max_regions < 1) throw ValidationError("mining.max_regions: must be positive");
  if (!(mining.dedup_iou > 0.0 && mining.dedup_iou <= 1.0)) throw ValidationError("mining.dedup_iou: must be in (0, 1]");
  trigger.validate();
  if (trigger_train_images < 0) throw ValidationError("trigger.train_images: must be >= 0");
  if (patch_size < 0 || patch_size > image_size) throw ValidationError("trigger.patch_size: must be in [0, image_size]");
  if (poisons_text(scenario)) text.validate();
  victim.validate();
  if (k < 1) throw ValidationError("metrics.k: must be positive");
  if (backend != "toy" && backend != "external") throw ValidationError("surrogate.backend: expected 'toy' or 'external'");
  if (backend == "external") {
    if (http.endpoint.empty())
      throw ValidationError("surrogate.endpoint: required for the external backend (or set BADCM_SURROGATE_URL)");
    if (poisons_images(scenario))
      throw ValidationError("surrogate.backend: trigger training needs a differentiable image surrogate; "
                            "the external backend only supports the L2V scenario");
  }
}

json RunConfig::to_json() const {
  json j;
  j["dataset"] = {{"manifest", dataset.generic_string()}, {"image_size", image_size}, {"split", split}};
  j["scenario"] = to_string(scenario);
  j["targets"] = targets;
  j["ratio"] = ratio;
  j["seed"] = seed;
  j["mining"] = {{"region_budget", mining.region_budget},
                 {"keyword_ratio", mining.keyword_ratio},
                 {"max_regions", mining.max_regions},
                 {"dedup_iou", mining.dedup_iou}};
  j["trigger"] = trigger.to_json();
  j["trigger"]["train_images"] = trigger_train_images;
  j["trigger"]["patch_size"] = patch_size;
  j["text_poison"] = text.to_json();
  j["victim"] = victim.to_json();
  j["victim"]["clean_baseline"] = clean_baseline;
  j["metrics"] = {{"k", k}};
  j["surrogate"] = {{"backend", backend},
                    {"endpoint", http.endpoint},
                    {"image_dim", http.image_dim},
                    {"text_dim", http.text_dim},
                    {"min_confidence", http.min_confidence},
                    {"max_proposals", http.max_proposals},
                    {"timeout_seconds", http.timeout_seconds},
                    {"toy_image_seed", toy_image_seed},
                    {"toy_text_seed", toy_text_seed}};
  return j;
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  RunConfig c;
  try {
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      fs::path manifest = d.at("manifest").get<std::string>();
      c.dataset = manifest.is_absolute() ? manifest : (base_dir / manifest).lexically_normal();
      c.image_size = d.value("image_size", c.image_size);
      if (d.contains("split")) c.split = d.at("split").get<std::array<double, 3>>();
    }
    if (j.contains("scenario")) c.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    if (j.contains("targets")) {
      c.targets = j.at("targets").is_array() ? j.at("targets").get<std::vector<int>>()
                                             : std::vector<int>{j.at("targets").get<int>()};
    }
    c.ratio = j.value("ratio", c.ratio);
    c.seed = j.value("seed", c.seed);
    if (j.contains("mining")) {
      const auto& m = j.at("mining");
      c.mining.region_budget = m.value("region_budget", c.mining.region_budget);
      c.mining.keyword_ratio = m.value("keyword_ratio", c.mining.keyword_ratio);
      c.mining.max_regions = m.value("max_regions", c.mining.max_regions);
      c.mining.dedup_iou = m.value("dedup_iou", c.mining.dedup_iou);
    }
    if (j.contains("trigger")) {
      const auto& t = j.at("trigger");
      c.trigger = TriggerTrainConfig::from_json(t);
      c.trigger_train_images = t.value("train_images", c.trigger_train_images);
      c.patch_size = t.value("patch_size", c.patch_size);
    }
    if (j.contains("text_poison")) c.text = TextPoisonConfig::from_json(j.at("text_poison"));
    if (j.contains("victim")) {
      c.victim = VictimConfig::from_json(j.at("victim"));
      c.clean_baseline = j.at("victim").value("clean_baseline", c.clean_baseline);
    }
    if (j.contains("metrics")) c.k = j.at("metrics").value("k", c.k);
    if (j.contains("surrogate")) {
      const auto& s = j.at("surrogate");
      c.backend = s.value("backend", c.backend);
      c.http.endpoint = s.value("endpoint", c.http.endpoint);
      c.http.image_dim = s.value("image_dim", c.http.image_dim);
      c.http.text_dim = s.value("text_dim", c.http.text_dim);
      c.http.min_confidence = s.value("min_confidence", c.http.min_confidence);
      c.http.max_proposals = s.value("max_proposals", c.http.max_proposals);
      c.http.timeout_seconds = s.value("timeout_seconds", c.http.timeout_seconds);
      c.toy_image_seed = s.value("toy_image_seed", c.toy_image_seed);
      c.toy_text_seed = s.value("toy_text_seed", c.toy_text_seed);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (c.backend == "external" && c.http.endpoint.empty())
    if (const char* env = std::getenv("BADCM_SURROGATE_URL")) c.http.endpoint = env;
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  auto c = RunConfig::from_json(j, fs::absolute(path).parent_path());
  c.validate();
  return c;
}

// ---------------------------------------------------------------- surrogates

SurrogateBundle::SurrogateBundle(const RunConfig& c) {
  if (c.backend == "external") {
    auto client = make_http_client(c.http);
    image_ = std::make_unique<HttpImageEmbedder>(client);
    text_ = std::make_unique<HttpTextEmbedder>(client);
    regions_ = std::make_unique<HttpRegionProposer>(client);
    candidates_ = std::make_unique<HttpCandidateOracle>(client);
  } else {
    image_ = std::make_unique<ToyImageEmbedder>(c.toy_image_seed);
    text_ = std::make_unique<ToyTextEmbedder>(c.toy_text_seed);
    regions_ = std::make_unique<GridRegionProposer>();
    candidates_ = std::make_unique<LexiconCandidateOracle>();
  }
  victim_image_ = std::make_unique<ToyImageEmbedder>(c.toy_image_seed);
  victim_text_ = std::make_unique<ToyTextEmbedder>(c.toy_text_seed);
}

const DifferentiableImageEmbedder* SurrogateBundle::differentiable_image() const {
  return dynamic_cast<const DifferentiableImageEmbedder*>(image_.get());
}

// ---------------------------------------------------------------- helpers

void require_artifact(const fs::path& path, const std::string& stage) {
  if (!fs::exists(path))
    throw ValidationError("missing " + path.string() + "; run `badcm " + stage + "` first");
}

void write_resolved_config(const RunConfig& config, const RunPaths& paths) {
  fs::create_directories(paths.root);
  std::ofstream out(paths.root / "config.resolved.json", std::ios::trunc);
  if (!out) throw IoError("cannot write resolved config in " + paths.root.string());
  out << config.to_json().dump(2) << '\n';
}

namespace {

std::uint64_t stage_seed(const RunConfig& c, std::string_view stage) { return mix_seed(c.seed, fnv1a(stage)); }

DatasetManifest load_split(const RunPaths& p, const char* name, const RunConfig& c) {
  const auto path = p.mine() / (std::string(name) + ".jsonl");
  require_artifact(path, "mine");
  return load_manifest(path, {c.image_size});
}

std::map<std::string, MiningRecord> load_sidecar(const RunPaths& p, const char* name) {
  const auto path = p.mine() / (std::string(name) + "_mining.jsonl");
  require_artifact(path, "mine");
  return read_mining_sidecar(path);
}

void check_target(const RunConfig& c, int target, int categories) {
  if (target >= categories)
    throw ValidationError("targets: label " + std::to_string(target) + " outside the dataset's " +
                          std::to_string(categories) + " categories");
  (void)c;
}

PatchTrigger trigger_for(const RunConfig& c) {
  return c.patch_size > 0 ? PatchTrigger::checker(c.image_size, c.image_size, c.patch_size)
                          : PatchTrigger::default_for(c.image_size, c.image_size);
}

void write_curve(const fs::path& path, const std::vector<double>& losses) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < losses.size(); ++i) out << json{{"epoch", i + 1}, {"loss", losses[i]}}.dump() << '\n';
}

}  // namespace

// ---------------------------------------------------------------- stages

MineSummary run_mine(const RunConfig& c, const RunPaths& p, const SurrogateBundle& s) {
  const auto full = load_manifest(c.dataset, {c.image_size});
  if (full.instances.empty()) throw ValidationError("dataset: manifest has no instances");
  for (int t : c.targets) check_target(c, t, full.categories);
  auto parts = split_dataset(full, c.split, stage_seed(c, "split"));
  fs::create_directories(p.mine());
  write_manifest(parts[0], p.mine() / "train.jsonl");
  write_manifest(parts[1], p.mine() / "query.jsonl");
  write_manifest(parts[2], p.mine() / "retrieval.jsonl");

  std::vector<ImageSample> train_images;
  for (const auto& i : parts[0].instances) train_images.push_back(i.image.get());
  MiningConfig mc = c.mining;
  mc.fill = channel_mean(train_images);

  MineSummary sum{parts[0].instances.size(), parts[1].instances.size(), parts[2].instances.size(), 0, 0, 0};
  double mask_fraction = 0;
  for (int part : {0, 1}) {
    std::vector<MiningRecord> records;
    for (const auto& inst : parts[part].instances) {
      records.push_back(mine_instance(inst, s.set(), mc));
      const auto& r = records.back();
      sum.unpoisonable += r.keywords.unpoisonable;
      sum.nothing_fits += r.mask.nothing_fits;
      mask_fraction += static_cast<double>(r.mask.popcount()) / static_cast<double>(r.mask.mask.size());
    }
    write_mining_sidecar(p.mine() / (part == 0 ? "train_mining.jsonl" : "query_mining.jsonl"), records);
  }
  sum.mean_mask_fraction = mask_fraction / static_cast<double>(sum.train + sum.query);
  return sum;
}

TriggerSummary run_train_trigger(const RunConfig& c, const RunPaths& p, const SurrogateBundle& s) {
  TriggerSummary sum;
  fs::create_directories(p.trigger());
  if (!poisons_images(c.scenario)) {
    std::ofstream(p.trigger() / "skipped.json") << json{{"reason", "scenario poisons text only"}}.dump() << '\n';
    sum.skipped = true;
    return sum;
  }
  const auto* fv = s.differentiable_image();
  if (!fv) throw BackendError("trigger training needs a differentiable image surrogate");
  const auto train = load_split(p, "train", c);
  const auto mining = load_sidecar(p, "train");

  std::vector<TrainingSample> samples;
  const std::size_t limit =
      c.trigger_train_images > 0 ? static_cast<std::size_t>(c.trigger_train_images) : train.instances.size();
  for (const auto& inst : train.instances) {
    if (samples.size() >= limit) break;
    const auto it = mining.find(inst.id);
    if (it == mining.end()) throw ValidationError("mining sidecar lacks '" + inst.id + "'; re-run `badcm mine`");
    samples.push_back({inst.image.get(), it->second.mask});
  }
  const auto seed = stage_seed(c, "trigger");
  auto result = train_trigger_generator(samples, trigger_for(c), *fv, c.trigger, seed);

  json record = c.trigger.to_json();
  record["seed"] = seed;
  record["image_size"] = c.image_size;
  save_generator(p.trigger() / "generator.ckpt", result.generator, record);
  save_discriminator(p.trigger() / "discriminator.ckpt", result.discriminator, record);
  write_training_log(p.trigger() / "train_log.jsonl", result.log);

  double ratio = 0;
  for (const auto& smp : samples)
    ratio += mask_energy_ratio(apply_perturbation(result.generator, smp.image, smp.mask).delta, smp.mask);
  sum.mask_energy_ratio = ratio / static_cast<double>(samples.size());
  sum.log = std::move(result.log);
  return sum;
}

PoisonSummary run_poison(const RunConfig& c, const RunPaths& p, const SurrogateBundle& s, int target) {
  const auto train = load_split(p, "train", c);
  check_target(c, target, train.categories);
  const auto mining = load_sidecar(p, "train");
  GeneratorNet generator;
  const GeneratorNet* gp = nullptr;
  if (poisons_images(c.scenario)) {
    require_artifact(p.trigger() / "generator.ckpt", "train-trigger");
    generator = load_generator(p.trigger() / "generator.ckpt");
    gp = &generator;
  }
  const auto plan = plan_poison(train, LabelVector::single(train.categories, target), c.ratio, c.scenario,
                                mix_seed(stage_seed(c, "poison"), static_cast<std::uint64_t>(target)));
  const auto out = apply_poison(plan, train, mining, gp, c.text, s.set());

  const auto dir = p.poison(target);
  fs::create_directories(dir);
  save_poisoned_dataset(out.manifest, out.records, dir);
  write_traces(dir / "traces.jsonl", out.traces);
  std::ofstream(dir / "plan.json") << json{{"target", target},
                                           {"ratio", c.ratio},
                                           {"seed", plan.seed},
                                           {"scenario", to_string(c.scenario)},
                                           {"victim_ids", plan.victim_ids},
                                           {"replaced", out.replaced}}
                                          .dump(2)
                                   << '\n';
  return {out.records.size(), out.replaced.size(), out.manifest.instances.size()};
}

VictimSummary run_train_victim(const RunConfig& c, const RunPaths& p, const SurrogateBundle& s, int target) {
  const auto poisoned_path = p.poison(target) / "manifest.jsonl";
  require_artifact(poisoned_path, "poison");
  const auto poisoned = load_manifest(poisoned_path, {c.image_size});
  const auto seed = stage_seed(c, "victim");
  VictimSummary sum;

  auto result = train_toy_victim(poisoned, s.victim_features(), c.victim, seed);
  fs::create_directories(p.victim(target));
  result.victim.save(p.victim(target) / "victim.ckpt");
  write_curve(p.victim(target) / "curve.jsonl", result.epoch_loss);
  sum.final_loss = result.epoch_loss.back();
  sum.steps = result.steps;

  if (c.clean_baseline) {
    const auto train = load_split(p, "train", c);
    auto clean = train_toy_victim(train, s.victim_features(), c.victim, seed);
    fs::create_directories(p.clean_victim());
    clean.victim.save(p.clean_victim() / "victim.ckpt");
    write_curve(p.clean_victim() / "curve.jsonl", clean.epoch_loss);
    sum.baseline_final_loss = clean.epoch_loss.back();
  }
  return sum;
}

EvaluateSummary run_evaluate(const RunConfig& c, const RunPaths& p, const SurrogateBundle& s, int target) {
  require_artifact(p.victim(target) / "victim.ckpt", "train-victim");
  const auto queries = load_split(p, "query", c);
  const auto database = load_split(p, "retrieval", c);
  const auto mining = load_sidecar(p, "query");

  // Triggered queries: the clean query set with the trained triggers applied, labels untouched.
  DatasetManifest triggered = queries;
  if (poisons_images(c.scenario)) {
    require_artifact(p.trigger() / "generator.ckpt", "train-trigger");
    const auto generator = load_generator(p.trigger() / "generator.ckpt");
    for (auto& inst : triggered.instances)
      inst.image = ImageHandle(quantize_8bit(poison_image(generator, inst.image.get(), mining.at(inst.id).mask)));
  }
  if (poisons_text(c.scenario)) {
    const auto set = s.set();
    for (auto& inst : triggered.instances) {
      const auto& kw = mining.at(inst.id).keywords;
      if (kw.positions.empty()) continue;
      inst.text = greedy_substitute(inst.text, kw, c.text, *set.text, *set.candidates).poisoned;
    }
  }

  EvaluateSummary out;
  const auto victim = ToyVictim::load(p.victim(target) / "victim.ckpt");
  const auto fs_ = s.victim_features();
  out.poisoned = attack_report(victim, fs_, queries, triggered, database, target, c.k, c.scenario, s.set().text);
  fs::create_directories(p.evaluate(target));
  write_report(p.evaluate(target) / "report.txt", out.poisoned.to_text());
  if (fs::exists(p.clean_victim() / "victim.ckpt")) {
    const auto clean = ToyVictim::load(p.clean_victim() / "victim.ckpt");
    out.baseline = attack_report(clean, fs_, queries, triggered, database, target, c.k, c.scenario, s.set().text);
    out.has_baseline = true;
    write_report(p.evaluate(target) / "baseline_report.txt", out.baseline.to_text());
  }
  return out;
}

std::string aggregate_report(const RunConfig& c, const std::vector<EvaluateSummary>& results) {
  if (results.empty()) throw ValidationError("aggregate_report: no results");
  double ba = 0, asr = 0, prior = 0, bba = 0, basr = 0, psnr = 0, ssim_v = 0, mse = 0, sbert = 0;
  bool baseline = true;
  for (const auto& r : results) {
    ba += r.poisoned.ba_avg;
    asr += r.poisoned.asr;
    prior += r.poisoned.target_prior;
    psnr += r.poisoned.psnr_mean;
    ssim_v += r.poisoned.ssim_mean;
    mse += r.poisoned.mse_mean;
    sbert += r.poisoned.sbert_avg;
    baseline = baseline && r.has_baseline;
    bba += r.baseline.ba_avg;
    basr += r.baseline.asr;
  }
  const double n = static_cast<double>(results.size());
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(6);
  s << "scenario=" << to_string(c.scenario) << '\n' << "targets=";
  for (std::size_t i = 0; i < c.targets.size(); ++i) s << (i ? "," : "") << c.targets[i];
  s << '\n'
    << "k=" << c.k << '\n'
    << "ba_avg=" << ba / n << '\n'
    << "asr=" << asr / n << '\n'
    << "target_prior=" << prior / n << '\n'
    << "psnr_mean=" << format_psnr(psnr / n) << '\n'
    << "ssim_mean=" << ssim_v / n << '\n'
    << "mse_mean=" << mse / n << '\n'
    << "sbert_avg=" << sbert / n << '\n';
  if (baseline) {
    s << "baseline_ba_avg=" << bba / n << '\n'
      << "baseline_asr=" << basr / n << '\n'
      << "asr_gain=" << (asr - basr) / n << '\n'
      << "ba_drop=" << (bba - ba) / n << '\n';
  }
  return s.str();
}

std::vector<EvaluateSummary> run_pipeline(const RunConfig& c, const RunPaths& p) {
  c.validate();
  const SurrogateBundle s(c);
  write_resolved_config(c, p);
  const auto mined = run_mine(c, p, s);
  spdlog::info("mine: {} train / {} query / {} retrieval, mean mask fraction {:.3f}", mined.train, mined.query,
               mined.retrieval, mined.mean_mask_fraction);
  const auto trig = run_train_trigger(c, p, s);
  if (!trig.skipped)
    spdlog::info("train-trigger: {} epochs, final fea {:.4f}, mask energy ratio {:.3f}", trig.log.size(),
                 trig.log.back().mean.fea, trig.mask_energy_ratio);
  std::vector<EvaluateSummary> results;
  for (int t : c.targets) {
    const auto ps = run_poison(c, p, s, t);
    spdlog::info("poison target {}: {} victims ({} replaced)", t, ps.victims, ps.replaced);
    run_train_victim(c, p, s, t);
    results.push_back(run_evaluate(c, p, s, t));
    spdlog::info("evaluate target {}: BA {:.4f} ASR {:.4f}", t, results.back().poisoned.ba_avg,
                 results.back().poisoned.asr);
  }
  write_report(p.root / "report.txt", aggregate_report(c, results));
  return results;
}

}  // namespace badcm
