#include "badcm/visual_trigger.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "badcm/error.hpp"
#include "badcm/random.hpp"

namespace badcm {

using nlohmann::json;

// ---------------------------------------------------------------- patch

PatchTrigger PatchTrigger::checker(int image_height, int image_width, int size) {
  if (size < 1 || size > image_height || size > image_width) throw ValidationError("patch size out of range");
  PatchTrigger t;
  t.image_height = image_height;
  t.image_width = image_width;
  t.patch_height = t.patch_width = size;
  t.top = image_height - size;
  t.left = image_width - size;
  const int cell = std::max(1, size / 6);
  t.patch.resize(static_cast<std::size_t>(size) * size * 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double v = ((y / cell + x / cell) % 2 == 0) ? 1.0 : 0.0;
      for (int c = 0; c < 3; ++c) t.patch[(static_cast<std::size_t>(y) * size + x) * 3 + c] = v;
    }
  return t;
}

PatchTrigger PatchTrigger::default_for(int image_height, int image_width) {
  const int size = std::max(1, static_cast<int>(std::lround(22.0 * image_width / 224.0)));
  return checker(image_height, image_width, std::min({size, image_height, image_width}));
}

void PatchTrigger::validate() const {
  if (patch_height < 1 || patch_width < 1 || patch_height > image_height || patch_width > image_width)
    throw ValidationError("patch larger than image");
  if (top < 0 || left < 0 || top + patch_height > image_height || left + patch_width > image_width)
    throw ValidationError("patch placement outside image");
  if (patch.size() != static_cast<std::size_t>(patch_height) * patch_width * 3)
    throw ValidationError("patch pixel count mismatch");
  for (double v : patch)
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("patch values must lie in [0,1]");
}

std::vector<std::uint8_t> PatchTrigger::placement_mask() const {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(image_height) * image_width, 0);
  for (int y = top; y < top + patch_height; ++y)
    std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(y) * image_width + left, patch_width, 1);
  return m;
}

ImageSample compose_reference(const ImageSample& image, const PatchTrigger& trigger) {
  trigger.validate();
  if (image.height() != trigger.image_height || image.width() != trigger.image_width)
    throw ValidationError("trigger placement does not match image size");
  std::vector<double> px(image.pixels().begin(), image.pixels().end());
  for (int y = 0; y < trigger.patch_height; ++y)
    for (int x = 0; x < trigger.patch_width; ++x)
      for (int c = 0; c < 3; ++c) px[image.index(trigger.top + y, trigger.left + x, c)] = trigger.patch_at(y, x, c);
  return ImageSample(image.height(), image.width(), std::move(px));
}

// ---------------------------------------------------------------- networks

namespace {

constexpr double kSlope = 0.2;

void zero_out(ag::Var& v) { std::fill(v.mutable_value().begin(), v.mutable_value().end(), 0.0); }

}  // namespace

GeneratorNet::GeneratorNet(int base, std::uint64_t seed, bool zero_head) : base_(base) {
  if (base < 1) throw ValidationError("generator needs at least one base channel");
  Rng rng(mix_seed(seed, fnv1a("generator")));
  enc1_ = nn::Conv2d(4, base, 3, 1, 1, rng);
  down_ = nn::Conv2d(base, 2 * base, 3, 2, 1, rng);
  bottleneck_ = nn::Conv2d(2 * base, 2 * base, 3, 2, 1, rng);
  dec2_ = nn::Conv2d(4 * base, 2 * base, 3, 1, 1, rng);
  dec1_ = nn::Conv2d(3 * base, base, 3, 1, 1, rng);
  head_ = nn::Conv2d(base, 3, 1, 1, 0, rng);
  if (zero_head) {
    zero_out(head_.weight);
    zero_out(head_.bias);
  }
}

ag::Var GeneratorNet::forward(const ag::Var& input) const {
  if (input.shape().size() != 4 || input.dim(1) != 4) throw ValidationError("generator expects N x 4 x H x W");
  if (input.dim(2) % 4 != 0 || input.dim(3) % 4 != 0)
    throw ValidationError("generator needs image sides divisible by 4");
  const auto e1 = ag::leaky_relu(enc1_(input), kSlope);
  const auto e2 = ag::leaky_relu(down_(e1), kSlope);
  const auto e3 = ag::leaky_relu(bottleneck_(e2), kSlope);
  const auto d2 = ag::leaky_relu(dec2_(ag::concat_channels(ag::upsample2x(e3), e2)), kSlope);
  const auto d1 = ag::leaky_relu(dec1_(ag::concat_channels(ag::upsample2x(d2), e1)), kSlope);
  return ag::scale(ag::tanh(head_(d1)), 0.5);
}

std::vector<nn::NamedParameter> GeneratorNet::parameters() const {
  std::vector<nn::NamedParameter> p;
  auto add = [&](const char* name, const nn::Conv2d& c) {
    p.push_back({std::string(name) + ".weight", c.weight});
    p.push_back({std::string(name) + ".bias", c.bias});
  };
  add("enc1", enc1_);
  add("down", down_);
  add("bottleneck", bottleneck_);
  add("dec2", dec2_);
  add("dec1", dec1_);
  add("head", head_);
  return p;
}

DiscriminatorNet::DiscriminatorNet(int base, std::uint64_t seed) : base_(base) {
  if (base < 1) throw ValidationError("discriminator needs at least one base channel");
  Rng rng(mix_seed(seed, fnv1a("discriminator")));
  c1_ = nn::Conv2d(3, base, 4, 2, 1, rng);
  c2_ = nn::Conv2d(base, 2 * base, 3, 1, 1, rng);
  c3_ = nn::Conv2d(2 * base, 1, 1, 1, 0, rng);
}

ag::Var DiscriminatorNet::forward(const ag::Var& images) const {
  if (images.shape().size() != 4 || images.dim(1) != 3) throw ValidationError("discriminator expects N x 3 x H x W");
  const auto h1 = ag::leaky_relu(c1_(images), kSlope);
  const auto h2 = ag::leaky_relu(c2_(h1), kSlope);
  return c3_(h2);
}

std::vector<nn::NamedParameter> DiscriminatorNet::parameters() const {
  return {{"c1.weight", c1_.weight}, {"c1.bias", c1_.bias}, {"c2.weight", c2_.weight},
          {"c2.bias", c2_.bias},     {"c3.weight", c3_.weight}, {"c3.bias", c3_.bias}};
}

// ---------------------------------------------------------------- config

void TriggerTrainConfig::validate() const {
  if (!(alpha > 0 && beta > 0 && gamma > 0 && learning_rate > 0)) throw ValidationError("trigger: loss weights and learning rate must be positive");
  if (epochs < 1 || batch_size < 1) throw ValidationError("trigger: epochs and batch_size must be positive");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) throw ValidationError("trigger: adam_beta1 must be in [0,1)");
  if (generator_channels < 1 || discriminator_channels < 1) throw ValidationError("trigger: channel counts must be positive");
}

json TriggerTrainConfig::to_json() const {
  return {{"alpha", alpha},
          {"beta", beta},
          {"gamma", gamma},
          {"learning_rate", learning_rate},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"adam_beta1", adam_beta1},
          {"generator_channels", generator_channels},
          {"discriminator_channels", discriminator_channels},
          {"zero_head", zero_head}};
}

TriggerTrainConfig TriggerTrainConfig::from_json(const json& j) {
  TriggerTrainConfig c;
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.gamma = j.value("gamma", c.gamma);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.generator_channels = j.value("generator_channels", c.generator_channels);
  c.discriminator_channels = j.value("discriminator_channels", c.discriminator_channels);
  c.zero_head = j.value("zero_head", c.zero_head);
  return c;
}

// ---------------------------------------------------------------- forward helpers

namespace {

void check_mask(const ImageSample& image, const InvariantMask& mask) {
  if (mask.height != image.height() || mask.width != image.width() ||
      mask.mask.size() != static_cast<std::size_t>(image.height()) * image.width())
    throw ValidationError("mask size does not match image");
}

struct Batch {
  ag::Var images;  // N x 3 x H x W
  ag::Var input;   // N x 4 x H x W
  ag::Var mask3;   // N x 3 x H x W
};

Batch make_batch(std::span<const ImageSample* const> images, std::span<const InvariantMask* const> masks) {
  const int n = static_cast<int>(images.size());
  const int H = images[0]->height(), W = images[0]->width();
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  std::vector<double> img(n * 3 * plane), in(n * 4 * plane), m3(n * 3 * plane);
  for (int i = 0; i < n; ++i) {
    if (images[i]->height() != H || images[i]->width() != W) throw ValidationError("batch images differ in size");
    check_mask(*images[i], *masks[i]);
    const auto chw = images[i]->to_chw();
    std::copy(chw.begin(), chw.end(), img.begin() + i * 3 * plane);
    std::copy(chw.begin(), chw.end(), in.begin() + i * 4 * plane);
    for (std::size_t p = 0; p < plane; ++p) {
      const double v = masks[i]->mask[p];
      in[i * 4 * plane + 3 * plane + p] = v;
      for (int c = 0; c < 3; ++c) m3[i * 3 * plane + c * plane + p] = v;
    }
  }
  return {ag::Var::constant({n, 3, H, W}, std::move(img)), ag::Var::constant({n, 4, H, W}, std::move(in)),
          ag::Var::constant({n, 3, H, W}, std::move(m3))};
}

ag::Var images_var(std::span<const ImageSample> images) {
  const int n = static_cast<int>(images.size());
  const int H = images[0].height(), W = images[0].width();
  const std::size_t per = static_cast<std::size_t>(3) * H * W;
  std::vector<double> v(n * per);
  for (int i = 0; i < n; ++i) {
    const auto chw = images[i].to_chw();
    std::copy(chw.begin(), chw.end(), v.begin() + i * per);
  }
  return ag::Var::constant({n, 3, H, W}, std::move(v));
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

std::vector<double> mask_plane(const InvariantMask& mask) { return {mask.mask.begin(), mask.mask.end()}; }

Perturbation apply_perturbation(const GeneratorNet& generator, const ImageSample& image, const InvariantMask& mask) {
  const ImageSample* ip = &image;
  const InvariantMask* mp = &mask;
  const auto batch = make_batch(std::span(&ip, 1), std::span(&mp, 1));
  const auto delta = generator.forward(batch.input);
  if (!all_finite(delta.value())) throw NumericError("generator produced a non-finite perturbation");
  const int H = image.height(), W = image.width();
  Perturbation out;
  out.delta.resize(image.pixels().size());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        out.delta[image.index(y, x, c)] = delta.value()[(static_cast<std::size_t>(c) * H + y) * W + x];
  std::vector<double> px(image.pixels().size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = std::clamp(image.pixels()[i] + out.delta[i], 0.0, 1.0);
  out.poisoned = ImageSample(H, W, std::move(px));
  return out;
}

ImageSample poison_image(const GeneratorNet& generator, const ImageSample& image, const InvariantMask& mask) {
  return apply_perturbation(generator, image, mask).poisoned;
}

GeneratorLoss generator_loss(const ag::Var& images, const ag::Var& poisoned, const ag::Var& delta, const ag::Var& mask3,
                             const ag::Var& reference_features, const DiscriminatorNet& discriminator,
                             const DifferentiableImageEmbedder& embedder, const TriggerTrainConfig& config) {
  GeneratorLoss l;
  l.rec = ag::mean(ag::square(ag::sub(poisoned, images)));
  const auto outside = ag::add_scalar(ag::scale(mask3, -1.0), 1.0);
  l.reg = ag::mean(ag::square(ag::mul(delta, outside)));
  l.adv_g = ag::bce_with_logits(discriminator.forward(poisoned), 1.0);
  l.fea = ag::add_scalar(ag::scale(ag::mean(ag::cosine_rows(embedder.embed_batch(poisoned), reference_features)), -1.0),
                         1.0);
  const ag::Var terms[] = {l.rec, l.reg, l.adv_g, l.fea};
  const double weights[] = {1.0, config.alpha, config.beta, config.gamma};
  l.total = ag::weighted_sum(terms, weights);
  return l;
}

ag::Var discriminator_loss(const DiscriminatorNet& discriminator, const ag::Var& real, const ag::Var& fake) {
  return ag::add(ag::bce_with_logits(discriminator.forward(real), 1.0),
                 ag::bce_with_logits(discriminator.forward(fake), 0.0));
}

LossTerms compute_losses(const ImageSample& image, const ImageSample& poisoned, std::span<const double> delta,
                         const InvariantMask& mask, const ImageSample& reference,
                         const DiscriminatorNet& discriminator, const DifferentiableImageEmbedder& embedder,
                         const TriggerTrainConfig& config) {
  check_mask(image, mask);
  const int H = image.height(), W = image.width();
  if (poisoned.height() != H || poisoned.width() != W || reference.height() != H || reference.width() != W ||
      delta.size() != image.pixels().size())
    throw ValidationError("compute_losses: shape mismatch");
  const ImageSample* ip = &image;
  const InvariantMask* mp = &mask;
  const auto batch = make_batch(std::span(&ip, 1), std::span(&mp, 1));
  const auto x_hat = images_var(std::span(&poisoned, 1));
  std::vector<double> delta_chw(delta.size());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c)
        delta_chw[(static_cast<std::size_t>(c) * H + y) * W + x] = delta[(static_cast<std::size_t>(y) * W + x) * 3 + c];
  const auto d = ag::Var::constant({1, 3, H, W}, std::move(delta_chw));
  const auto ref_features = embedder.embed_batch(images_var(std::span(&reference, 1)));
  const auto g = generator_loss(batch.images, x_hat, d, batch.mask3, ref_features, discriminator, embedder, config);
  LossTerms t;
  t.rec = g.rec.item();
  t.reg = g.reg.item();
  t.adv_g = g.adv_g.item();
  t.fea = g.fea.item();
  t.total = g.total.item();
  t.adv_d = discriminator_loss(discriminator, batch.images, x_hat).item();
  return t;
}

// ---------------------------------------------------------------- training

TriggerTrainResult train_trigger_generator(std::span<const TrainingSample> samples, const PatchTrigger& trigger,
                                           const DifferentiableImageEmbedder& embedder,
                                           const TriggerTrainConfig& config, std::uint64_t seed) {
  config.validate();
  if (samples.empty()) throw ValidationError("train_trigger_generator: empty training set");

  TriggerTrainResult result;
  result.generator = GeneratorNet(config.generator_channels, seed, config.zero_head);
  result.discriminator = DiscriminatorNet(config.discriminator_channels, seed);
  auto params_of = [](const std::vector<nn::NamedParameter>& named) {
    std::vector<ag::Var> v;
    for (const auto& p : named) v.push_back(p.var);
    return v;
  };
  nn::Adam opt_g(params_of(result.generator.parameters()), config.learning_rate, config.adam_beta1);
  nn::Adam opt_d(params_of(result.discriminator.parameters()), config.learning_rate, config.adam_beta1);

  // Reference features never change, so compute them once.
  std::vector<std::vector<double>> ref_features;
  ref_features.reserve(samples.size());
  for (const auto& s : samples) ref_features.push_back(embedder.embed_image(compose_reference(s.image, trigger)).values);
  const int dim = embedder.dimension();

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, fnv1a("trigger-batches")));

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    EpochLog elog;
    elog.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<const ImageSample*> imgs;
      std::vector<const InvariantMask*> masks;
      std::vector<double> refs;
      for (std::size_t k = start; k < end; ++k) {
        imgs.push_back(&samples[order[k]].image);
        masks.push_back(&samples[order[k]].mask);
        refs.insert(refs.end(), ref_features[order[k]].begin(), ref_features[order[k]].end());
      }
      const int n = static_cast<int>(imgs.size());
      const auto batch = make_batch(imgs, masks);
      const auto ref = ag::Var::constant({n, dim}, std::move(refs));

      const auto delta = result.generator.forward(batch.input);
      const auto poisoned = ag::clamp(ag::add(batch.images, delta), 0.0, 1.0);

      opt_d.zero_grad();
      const auto loss_d = discriminator_loss(result.discriminator, batch.images, poisoned.detach());
      loss_d.backward();
      opt_d.step();

      opt_g.zero_grad();
      const auto g = generator_loss(batch.images, poisoned, delta, batch.mask3, ref, result.discriminator, embedder,
                                    config);
      g.total.backward();

      LossTerms t{g.rec.item(), g.reg.item(), loss_d.item(), g.adv_g.item(), g.fea.item(), g.total.item()};
      if (!std::isfinite(t.total) || !std::isfinite(t.adv_d)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch starting at " << start << " (sample indices";
        for (std::size_t k = start; k < end; ++k) msg << ' ' << order[k];
        msg << "): rec=" << t.rec << " reg=" << t.reg << " adv_d=" << t.adv_d << " adv_g=" << t.adv_g
            << " fea=" << t.fea;
        throw NumericError(msg.str());
      }
      opt_g.step();
      result.step_log.push_back(t);
      ++elog.steps;
      elog.mean.rec += t.rec;
      elog.mean.reg += t.reg;
      elog.mean.adv_d += t.adv_d;
      elog.mean.adv_g += t.adv_g;
      elog.mean.fea += t.fea;
      elog.mean.total += t.total;
    }
    const double inv = 1.0 / elog.steps;
    for (double* v : {&elog.mean.rec, &elog.mean.reg, &elog.mean.adv_d, &elog.mean.adv_g, &elog.mean.fea,
                      &elog.mean.total})
      *v *= inv;
    spdlog::debug("trigger epoch {}: rec={:.3e} reg={:.3e} fea={:.4f} adv_d={:.4f} adv_g={:.4f}", epoch,
                  elog.mean.rec, elog.mean.reg, elog.mean.fea, elog.mean.adv_d, elog.mean.adv_g);
    result.log.push_back(elog);
  }
  return result;
}

double mask_energy_ratio(std::span<const double> delta, const InvariantMask& mask) {
  if (delta.size() != mask.mask.size() * 3) throw ValidationError("mask_energy_ratio: size mismatch");
  double inside = 0, total = 0;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double e = delta[i] * delta[i];
    total += e;
    if (mask.mask[i / 3]) inside += e;
  }
  return total == 0 ? 1.0 : inside / total;
}

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write training log: " + path.string());
  for (const auto& e : log)
    out << json{{"epoch", e.epoch},       {"steps", e.steps},   {"rec", e.mean.rec},
                {"reg", e.mean.reg},      {"adv_d", e.mean.adv_d}, {"adv_g", e.mean.adv_g},
                {"fea", e.mean.fea},      {"total", e.mean.total}}
               .dump()
        << '\n';
}

// ---------------------------------------------------------------- checkpoints

void save_generator(const std::filesystem::path& path, const GeneratorNet& generator, json config) {
  config["kind"] = "generator";
  config["base_channels"] = generator.base_channels();
  nn::save_checkpoint(path, config, generator.parameters());
}

GeneratorNet load_generator(const std::filesystem::path& path) {
  const auto ckpt = nn::read_checkpoint(path);
  if (ckpt.config.value("kind", "") != "generator") throw ValidationError(path.string() + " is not a generator checkpoint");
  GeneratorNet g(ckpt.config.at("base_channels").get<int>(), 0, true);
  auto params = g.parameters();
  nn::load_parameters(ckpt, params);
  return g;
}

void save_discriminator(const std::filesystem::path& path, const DiscriminatorNet& discriminator, json config) {
  config["kind"] = "discriminator";
  config["base_channels"] = discriminator.base_channels();
  nn::save_checkpoint(path, config, discriminator.parameters());
}

DiscriminatorNet load_discriminator(const std::filesystem::path& path) {
  const auto ckpt = nn::read_checkpoint(path);
  if (ckpt.config.value("kind", "") != "discriminator")
    throw ValidationError(path.string() + " is not a discriminator checkpoint");
  DiscriminatorNet d(ckpt.config.at("base_channels").get<int>(), 0);
  auto params = d.parameters();
  nn::load_parameters(ckpt, params);
  return d;
}

}  // namespace badcm
