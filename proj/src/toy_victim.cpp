#include "badcm/toy_victim.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "badcm/error.hpp"
#include "badcm/random.hpp"

namespace badcm {

using nlohmann::json;

void VictimConfig::validate() const {
  if (hidden < 1 || common_dim < 1) throw ValidationError("victim: hidden and common_dim must be positive");
  if (epochs < 1 || batch_size < 2) throw ValidationError("victim: epochs >= 1 and batch_size >= 2 required");
  if (!(learning_rate > 0 && temperature > 0 && contrastive_weight >= 0))
    throw ValidationError("victim: learning_rate and temperature must be positive, contrastive_weight non-negative");
}

json VictimConfig::to_json() const {
  return {{"hidden", hidden},
          {"common_dim", common_dim},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"temperature", temperature},
          {"contrastive_weight", contrastive_weight}};
}

VictimConfig VictimConfig::from_json(const json& j) {
  VictimConfig c;
  c.hidden = j.value("hidden", c.hidden);
  c.common_dim = j.value("common_dim", c.common_dim);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.temperature = j.value("temperature", c.temperature);
  c.contrastive_weight = j.value("contrastive_weight", c.contrastive_weight);
  return c;
}

PairFeatures extract_features(const DatasetManifest& manifest, const FeatureSpace& space) {
  PairFeatures f;
  for (const auto& inst : manifest.instances) {
    f.image.push_back(space.image->embed_image(inst.image.get()).values);
    f.text.push_back(space.text->embed_text(inst.text).values);
  }
  return f;
}

// ---------------------------------------------------------------- model

ToyVictim::ToyVictim(int image_in, int text_in, int categories, const VictimConfig& config, std::uint64_t seed)
    : image_in_(image_in), text_in_(text_in), categories_(categories), config_(config) {
  config.validate();
  if (categories < 1) throw ValidationError("victim needs at least one category");
  Rng rng(mix_seed(seed, fnv1a("toy-victim")));
  img1_ = nn::Linear(image_in, config.hidden, rng);
  img2_ = nn::Linear(config.hidden, config.common_dim, rng);
  txt1_ = nn::Linear(text_in, config.hidden, rng);
  txt2_ = nn::Linear(config.hidden, config.common_dim, rng);
  classifier_ = nn::Linear(config.common_dim, categories, rng);
  img_mean_.assign(image_in, 0.0);
  img_std_.assign(image_in, 1.0);
  txt_mean_.assign(text_in, 0.0);
  txt_std_.assign(text_in, 1.0);
}

namespace {

void column_stats(const std::vector<std::vector<double>>& rows, std::vector<double>& mean, std::vector<double>& sd) {
  const std::size_t d = mean.size();
  std::fill(mean.begin(), mean.end(), 0.0);
  std::fill(sd.begin(), sd.end(), 0.0);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
  for (double& m : mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (std::size_t j = 0; j < d; ++j) sd[j] += (r[j] - mean[j]) * (r[j] - mean[j]);
  for (double& s : sd) s = std::sqrt(s / static_cast<double>(rows.size())) + 1e-6;
}

std::vector<std::vector<double>> rows_of(const ag::Var& v) {
  const int n = v.dim(0), d = v.dim(1);
  std::vector<std::vector<double>> out(n);
  for (int i = 0; i < n; ++i) out[i].assign(v.value().begin() + i * d, v.value().begin() + (i + 1) * d);
  return out;
}

}  // namespace

void ToyVictim::fit_normalization(const PairFeatures& train) {
  if (train.image.empty()) throw ValidationError("fit_normalization: no training features");
  column_stats(train.image, img_mean_, img_std_);
  column_stats(train.text, txt_mean_, txt_std_);
}

ag::Var ToyVictim::tower(const nn::Linear& l1, const nn::Linear& l2, const std::vector<double>& mean,
                         const std::vector<double>& sd, const std::vector<std::vector<double>>& raw) const {
  const int n = static_cast<int>(raw.size()), d = static_cast<int>(mean.size());
  std::vector<double> x(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(raw[i].size()) != d) throw ValidationError("victim: feature width mismatch");
    for (int j = 0; j < d; ++j) x[static_cast<std::size_t>(i) * d + j] = (raw[i][j] - mean[j]) / sd[j];
  }
  return l2(ag::relu(l1(ag::Var::constant({n, d}, std::move(x)))));
}

ag::Var ToyVictim::image_tower(const std::vector<std::vector<double>>& raw) const {
  return tower(img1_, img2_, img_mean_, img_std_, raw);
}

ag::Var ToyVictim::text_tower(const std::vector<std::vector<double>>& raw) const {
  return tower(txt1_, txt2_, txt_mean_, txt_std_, raw);
}

std::vector<std::vector<double>> ToyVictim::embed_images(const std::vector<std::vector<double>>& raw) const {
  return rows_of(image_tower(raw));
}

std::vector<std::vector<double>> ToyVictim::embed_texts(const std::vector<std::vector<double>>& raw) const {
  return rows_of(text_tower(raw));
}

std::vector<nn::NamedParameter> ToyVictim::parameters() const {
  std::vector<nn::NamedParameter> p;
  auto add = [&](const char* name, const nn::Linear& l) {
    p.push_back({std::string(name) + ".weight", l.weight});
    p.push_back({std::string(name) + ".bias", l.bias});
  };
  add("img1", img1_);
  add("img2", img2_);
  add("txt1", txt1_);
  add("txt2", txt2_);
  add("classifier", classifier_);
  return p;
}

json ToyVictim::config_json() const {
  return {{"kind", "toy-victim"},          {"image_in", image_in_},   {"text_in", text_in_},
          {"categories", categories_},     {"config", config_.to_json()}, {"img_mean", img_mean_},
          {"img_std", img_std_},           {"txt_mean", txt_mean_},   {"txt_std", txt_std_}};
}

void ToyVictim::save(const std::filesystem::path& path) const { nn::save_checkpoint(path, config_json(), parameters()); }

ToyVictim ToyVictim::load(const std::filesystem::path& path) {
  const auto ckpt = nn::read_checkpoint(path);
  const auto& c = ckpt.config;
  if (c.value("kind", "") != "toy-victim") throw ValidationError(path.string() + " is not a victim checkpoint");
  ToyVictim v(c.at("image_in").get<int>(), c.at("text_in").get<int>(), c.at("categories").get<int>(),
              VictimConfig::from_json(c.at("config")), 0);
  v.img_mean_ = c.at("img_mean").get<std::vector<double>>();
  v.img_std_ = c.at("img_std").get<std::vector<double>>();
  v.txt_mean_ = c.at("txt_mean").get<std::vector<double>>();
  v.txt_std_ = c.at("txt_std").get<std::vector<double>>();
  auto params = v.parameters();
  nn::load_parameters(ckpt, params);
  return v;
}

// ---------------------------------------------------------------- training

VictimTrainResult train_toy_victim(const PairFeatures& features, const std::vector<LabelVector>& labels,
                                   int categories, const VictimConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t n = features.image.size();
  if (n == 0) throw ValidationError("train_toy_victim: empty training set");
  if (features.text.size() != n || labels.size() != n) throw ValidationError("train_toy_victim: size mismatch");

  VictimTrainResult result;
  result.victim = ToyVictim(static_cast<int>(features.image[0].size()), static_cast<int>(features.text[0].size()),
                            categories, config, seed);
  result.victim.fit_normalization(features);
  std::vector<ag::Var> params;
  for (const auto& p : result.victim.parameters()) params.push_back(p.var);
  nn::Adam opt(params, config.learning_rate);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, fnv1a("victim-batches")));
  const double inv_t = 1.0 / config.temperature;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      std::vector<std::vector<double>> bi, bt;
      std::vector<double> targets;
      for (std::size_t k = start; k < end; ++k) {
        bi.push_back(features.image[order[k]]);
        bt.push_back(features.text[order[k]]);
        for (int c = 0; c < categories; ++c) targets.push_back(labels[order[k]].test(c) ? 1.0 : 0.0);
      }
      const auto zi = result.victim.image_tower(bi);
      const auto zt = result.victim.text_tower(bt);
      auto loss = ag::add(ag::bce_with_logits(result.victim.classify(zi), targets),
                          ag::bce_with_logits(result.victim.classify(zt), targets));
      if (config.contrastive_weight > 0 && bi.size() > 1) {
        // Pairs that share a label are positives, so same-class items in a batch are not pushed apart.
        const std::size_t b = bi.size();
        std::vector<std::uint8_t> positive(b * b);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < b; ++j)
            positive[i * b + j] = labels[order[start + i]].intersects(labels[order[start + j]]);
        const auto ni = ag::l2_normalize_rows(zi), nt = ag::l2_normalize_rows(zt);
        const auto nce = ag::add(ag::cross_entropy_positives(ag::scale(ag::matmul_nt(ni, nt), inv_t), positive),
                                 ag::cross_entropy_positives(ag::scale(ag::matmul_nt(nt, ni), inv_t), positive));
        loss = ag::add(loss, ag::scale(nce, 0.5 * config.contrastive_weight));
      }
      const double value = loss.item();
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "victim loss diverged at epoch " << epoch << ", batch starting at " << start;
        throw NumericError(msg.str());
      }
      opt.zero_grad();
      loss.backward();
      opt.step();
      epoch_loss += value;
      ++batches;
      ++result.steps;
    }
    result.epoch_loss.push_back(epoch_loss / batches);
  }
  spdlog::debug("victim trained: {} steps, final loss {:.4f}", result.steps, result.epoch_loss.back());
  return result;
}

VictimTrainResult train_toy_victim(const DatasetManifest& train, const FeatureSpace& space, const VictimConfig& config,
                                   std::uint64_t seed) {
  std::vector<LabelVector> labels;
  for (const auto& inst : train.instances) labels.push_back(inst.label);
  return train_toy_victim(extract_features(train, space), labels, train.categories, config, seed);
}

// ---------------------------------------------------------------- report

AttackReport attack_report(const ToyVictim& victim, const FeatureSpace& space, const DatasetManifest& clean_queries,
                           const DatasetManifest& triggered_queries, const DatasetManifest& database, int target,
                           std::size_t k, AttackScenario scenario, const TextEmbedder* similarity_embedder) {
  if (clean_queries.instances.size() != triggered_queries.instances.size())
    throw ValidationError("attack_report: triggered queries must align with clean queries");
  if (target < 0 || target >= database.categories) throw ValidationError("attack_report: target outside label range");
  if (database.instances.empty()) throw ValidationError("attack_report: empty database");

  AttackReport r;
  r.scenario = to_string(scenario);
  r.dual_key_as_v2l = scenario == AttackScenario::DualKey;
  r.asr_direction = poisons_images(scenario) ? "I2T" : "T2I";
  r.target = target;
  r.k = k;
  r.queries = clean_queries.instances.size();
  r.database = database.instances.size();

  const auto qf = extract_features(clean_queries, space);
  const auto df = extract_features(database, space);
  RetrievalSet q_img{{}, victim.embed_images(qf.image)}, q_txt{{}, victim.embed_texts(qf.text)};
  RetrievalSet d_img{{}, victim.embed_images(df.image)}, d_txt{{}, victim.embed_texts(df.text)};
  for (const auto& i : clean_queries.instances) q_img.ids.push_back(i.id);
  q_txt.ids = q_img.ids;
  for (const auto& i : database.instances) d_img.ids.push_back(i.id);
  d_txt.ids = d_img.ids;

  const auto share = [&](std::size_t q, std::size_t d) {
    return clean_queries.instances[q].label.intersects(database.instances[d].label);
  };
  r.ba_i2t = map_at_k(q_img, d_txt, share, k);
  r.ba_t2i = map_at_k(q_txt, d_img, share, k);
  r.ba_avg = 0.5 * (r.ba_i2t + r.ba_t2i);

  std::size_t with_target = 0;
  for (const auto& i : database.instances) with_target += i.label.test(target);
  r.target_prior = static_cast<double>(with_target) / static_cast<double>(database.instances.size());

  // Queries that already carry the target say nothing about the backdoor.
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < triggered_queries.instances.size(); ++i)
    if (!clean_queries.instances[i].label.test(target)) keep.push_back(i);
  r.asr_queries = keep.size();
  if (!keep.empty()) {
    DatasetManifest sub;
    sub.categories = triggered_queries.categories;
    for (auto i : keep) sub.instances.push_back(triggered_queries.instances[i]);
    const auto tf = extract_features(sub, space);
    RetrievalSet tq;
    for (const auto& i : sub.instances) tq.ids.push_back(i.id);
    const auto carries = [&](std::size_t, std::size_t d) { return database.instances[d].label.test(target); };
    if (poisons_images(scenario)) {
      tq.embeddings = victim.embed_images(tf.image);
      r.asr = map_at_k(tq, d_txt, carries, k);
    } else {
      tq.embeddings = victim.embed_texts(tf.text);
      r.asr = map_at_k(tq, d_img, carries, k);
    }
  }

  double psnr_sum = 0;
  std::size_t psnr_finite = 0;
  double sim_sum = 0, subs_sum = 0, edit_sum = 0;
  for (std::size_t i = 0; i < clean_queries.instances.size(); ++i) {
    const auto& c = clean_queries.instances[i];
    const auto& t = triggered_queries.instances[i];
    if (poisons_images(scenario)) {
      const auto q = image_quality(c.image.get(), t.image.get());
      ++r.image_pairs;
      if (q.psnr_infinite()) {
        ++r.psnr_infinite;
      } else {
        psnr_sum += q.psnr;
        ++psnr_finite;
      }
      r.ssim_mean += q.ssim;
      r.mse_mean += q.mse;
    }
    if (poisons_text(scenario)) {
      ++r.text_pairs;
      sim_sum += semantic_similarity(c.text, t.text, similarity_embedder ? *similarity_embedder : *space.text);
      subs_sum += static_cast<double>(substitution_count(c.text, t.text));
      edit_sum += static_cast<double>(word_edit_distance(c.text, t.text));
    }
  }
  if (r.image_pairs) {
    r.ssim_mean /= static_cast<double>(r.image_pairs);
    r.mse_mean /= static_cast<double>(r.image_pairs);
    r.psnr_mean = psnr_finite ? psnr_sum / static_cast<double>(psnr_finite) : std::numeric_limits<double>::infinity();
  }
  if (r.text_pairs) {
    r.sbert_avg = sim_sum / static_cast<double>(r.text_pairs);
    r.substitutions_mean = subs_sum / static_cast<double>(r.text_pairs);
    r.edit_distance_mean = edit_sum / static_cast<double>(r.text_pairs);
  }
  return r;
}

}  // namespace badcm
