// badcm: mine -> train-trigger -> poison -> train-victim -> evaluate, or all at once with `pipeline`.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "badcm/error.hpp"
#include "badcm/pipeline.hpp"
#include "badcm/toy_dataset.hpp"

namespace fs = std::filesystem;
using namespace badcm;

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Validation:
    case ErrorKind::Parse:
    case ErrorKind::Unpoisonable: return 2;
    case ErrorKind::Backend: return 3;
    case ErrorKind::Numeric: return 4;
    case ErrorKind::Io: return 1;
  }
  return 1;
}

void print_table(const RunConfig& c, int target, const EvaluateSummary& r) {
  const auto& p = r.poisoned;
  std::printf("\ntarget %d  scenario %s  (ASR direction %s%s)\n", target, p.scenario.c_str(), p.asr_direction.c_str(),
              p.dual_key_as_v2l ? ", dual-key evaluated as V2L" : "");
  std::printf("%-10s %8s %8s %8s %8s %8s %8s %8s %8s\n", "victim", "BA_i2t", "BA_t2i", "BA", "ASR", "PSNR", "SSIM",
              "MSE", "SBERT");
  auto row = [&](const char* name, const AttackReport& a) {
    std::printf("%-10s %8.4f %8.4f %8.4f %8.4f %8s %8.4f %8.2f %8.4f\n", name, a.ba_i2t, a.ba_t2i, a.ba_avg, a.asr,
                format_psnr(a.psnr_mean).c_str(), a.ssim_mean, a.mse_mean, a.sbert_avg);
  };
  if (r.has_baseline) row("clean", r.baseline);
  row("poisoned", p);
  std::printf("target prior in database %.4f, MAP@%zu over %zu queries (%zu for ASR)\n", p.target_prior, c.k,
              p.queries, p.asr_queries);
}

std::vector<int> targets_for(const RunConfig& c, int only) {
  return only >= 0 ? std::vector<int>{only} : c.targets;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Invisible cross-modal backdoor toolkit"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  std::string config_path, run_dir;
  int only_target = -1;
  auto add_stage = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("-r,--run-dir", run_dir, "Run directory")->required();
    if (name != "mine" && name != "train-trigger")
      sub->add_option("-t,--target", only_target, "Only this target label (default: all configured)");
    return sub;
  };
  auto* mine = add_stage("mine", "Split the dataset and mine invariant regions and keywords");
  auto* trig = add_stage("train-trigger", "Train the visual trigger generator");
  auto* poison = add_stage("poison", "Poison the training split");
  auto* victim = add_stage("train-victim", "Train the toy retrieval victim (and a clean baseline)");
  auto* eval = add_stage("evaluate", "Measure BA, ASR and stealthiness");
  auto* pipe = add_stage("pipeline", "Run every stage in order");

  std::string toy_out;
  ToyDatasetOptions toy;
  auto* mk = app.add_subcommand("make-toy-dataset", "Write the synthetic paired dataset");
  mk->add_option("-o,--out", toy_out, "Output directory")->required();
  mk->add_option("--count", toy.count, "Number of pairs")->capture_default_str();
  mk->add_option("--size", toy.image_size, "Image side in pixels")->capture_default_str();
  mk->add_option("--seed", toy.seed, "Generator seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (mk->parsed()) {
      const auto manifest = write_toy_dataset(toy_out, toy);
      std::printf("wrote %d pairs to %s\n", toy.count, manifest.string().c_str());
      return 0;
    }

    const RunConfig config = load_run_config(config_path);
    const RunPaths paths{run_dir};
    if (only_target >= 0) {
      bool known = false;
      for (int t : config.targets) known = known || t == only_target;
      if (!known) throw ValidationError("--target " + std::to_string(only_target) + " is not in the configured targets");
    }

    if (pipe->parsed()) {
      const auto results = run_pipeline(config, paths);
      for (std::size_t i = 0; i < results.size(); ++i) print_table(config, config.targets[i], results[i]);
      std::printf("\n%s", aggregate_report(config, results).c_str());
      return 0;
    }

    const SurrogateBundle surrogates(config);
    write_resolved_config(config, paths);
    if (mine->parsed()) {
      const auto s = run_mine(config, paths, surrogates);
      std::printf("split: %zu train, %zu query, %zu retrieval\n", s.train, s.query, s.retrieval);
      std::printf("mean invariant-mask fraction %.4f, %zu images with no region under budget\n", s.mean_mask_fraction,
                  s.nothing_fits);
      std::printf("%zu texts without eligible keywords\n", s.unpoisonable);
    } else if (trig->parsed()) {
      const auto s = run_train_trigger(config, paths, surrogates);
      if (s.skipped) {
        std::printf("scenario %s poisons text only; no generator trained\n", to_string(config.scenario).c_str());
      } else {
        const auto& first = s.log.front().mean;
        const auto& last = s.log.back().mean;
        std::printf("%zu epochs, %d steps per epoch\n", s.log.size(), s.log.back().steps);
        std::printf("%-6s %10s %10s %10s %10s %10s %10s\n", "epoch", "rec", "reg", "adv_d", "adv_g", "fea", "total");
        for (const auto* e : {&s.log.front(), &s.log.back()})
          std::printf("%-6d %10.3e %10.3e %10.4f %10.4f %10.4f %10.4f\n", e->epoch, e->mean.rec, e->mean.reg,
                      e->mean.adv_d, e->mean.adv_g, e->mean.fea, e->mean.total);
        std::printf("fea %.4f -> %.4f, delta energy inside mask %.3f\n", first.fea, last.fea, s.mask_energy_ratio);
      }
    } else if (poison->parsed()) {
      for (int t : targets_for(config, only_target)) {
        const auto s = run_poison(config, paths, surrogates, t);
        std::printf("target %d: poisoned %zu of %zu training pairs (%zu unpoisonable victims replaced)\n", t,
                    s.victims, s.train, s.replaced);
      }
    } else if (victim->parsed()) {
      for (int t : targets_for(config, only_target)) {
        const auto s = run_train_victim(config, paths, surrogates, t);
        std::printf("target %d: %d steps, final loss %.4f", t, s.steps, s.final_loss);
        if (config.clean_baseline) std::printf(" (clean baseline %.4f)", s.baseline_final_loss);
        std::printf("\n");
      }
    } else if (eval->parsed()) {
      std::vector<EvaluateSummary> results;
      const auto targets = targets_for(config, only_target);
      for (int t : targets) {
        results.push_back(run_evaluate(config, paths, surrogates, t));
        print_table(config, t, results.back());
      }
      if (only_target < 0) write_report(paths.root / "report.txt", aggregate_report(config, results));
    }
    return 0;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
