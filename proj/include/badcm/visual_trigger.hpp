#pragma once

// Visual trigger: an encoder-decoder generator turns the visible patch trigger
// into a small additive perturbation confined to the invariant mask.

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"

#include "badcm/autograd.hpp"
#include "badcm/datamodel.hpp"
#include "badcm/mining.hpp"
#include "badcm/nn.hpp"
#include "badcm/surrogate.hpp"

namespace badcm {

/// Visible patch pasted onto an image at a fixed placement.
struct PatchTrigger {
  int image_height = 0;
  int image_width = 0;
  int top = 0;
  int left = 0;
  int patch_height = 0;
  int patch_width = 0;
  std::vector<double> patch;  // patch_height x patch_width x 3, values in [0,1]

  /// Black/white checker of side `size` in the bottom-right corner.
  static PatchTrigger checker(int image_height, int image_width, int size);
  /// 22 px checker at 224 px, scaled linearly with the image width.
  static PatchTrigger default_for(int image_height, int image_width);

  void validate() const;
  /// H*W 0/1 placement mask.
  std::vector<std::uint8_t> placement_mask() const;
  double patch_at(int y, int x, int c) const {
    return patch[(static_cast<std::size_t>(y) * patch_width + x) * 3 + c];
  }
};

/// x * (1 - m) + p * m.
ImageSample compose_reference(const ImageSample& image, const PatchTrigger& trigger);

/// UNet-style generator: two stride-2 downsamplings, two upsamplings with skip
/// concatenations, and a tanh head scaled to [-0.5, 0.5].
/// Input is N x 4 x H x W (image and mask), output the N x 3 x H x W perturbation.
class GeneratorNet {
 public:
  GeneratorNet() = default;
  /// `zero_head` starts with a zero output layer, so the initial perturbation is exactly 0.
  GeneratorNet(int base_channels, std::uint64_t seed, bool zero_head = true);

  ag::Var forward(const ag::Var& input) const;
  std::vector<nn::NamedParameter> parameters() const;
  int base_channels() const { return base_; }

 private:
  int base_ = 0;
  nn::Conv2d enc1_, down_, bottleneck_, dec2_, dec1_, head_;
};

/// Patch discriminator producing a grid of real/fake logits (receptive field 8 px).
class DiscriminatorNet {
 public:
  DiscriminatorNet() = default;
  DiscriminatorNet(int base_channels, std::uint64_t seed);

  ag::Var forward(const ag::Var& images) const;
  std::vector<nn::NamedParameter> parameters() const;
  int base_channels() const { return base_; }

 private:
  int base_ = 0;
  nn::Conv2d c1_, c2_, c3_;
};

struct TriggerTrainConfig {
  double alpha = 5.0;
  double beta = 5e-3;
  double gamma = 1.0;
  double learning_rate = 5e-5;
  int epochs = 200;
  int batch_size = 64;
  double adam_beta1 = 0.5;
  int generator_channels = 8;
  int discriminator_channels = 8;
  /// Start training from a zero output layer instead of a random one.
  bool zero_head = false;

  void validate() const;
  nlohmann::json to_json() const;
  static TriggerTrainConfig from_json(const nlohmann::json& j);
};

struct LossTerms {
  double rec = 0, reg = 0, adv_d = 0, adv_g = 0, fea = 0, total = 0;
};

struct Perturbation {
  ImageSample poisoned;
  std::vector<double> delta;  // H x W x 3, before clamping
};

/// N x 1 x H x W mask plane(s) for the generator input.
std::vector<double> mask_plane(const InvariantMask& mask);

Perturbation apply_perturbation(const GeneratorNet& generator, const ImageSample& image, const InvariantMask& mask);
ImageSample poison_image(const GeneratorNet& generator, const ImageSample& image, const InvariantMask& mask);

/// Graph form of the generator objective on a batch. `mask3` is N x 3 x H x W,
/// `reference_features` the (constant) surrogate features of the patched references.
struct GeneratorLoss {
  ag::Var rec, reg, adv_g, fea, total;
};
GeneratorLoss generator_loss(const ag::Var& images, const ag::Var& poisoned, const ag::Var& delta, const ag::Var& mask3,
                             const ag::Var& reference_features, const DiscriminatorNet& discriminator,
                             const DifferentiableImageEmbedder& embedder, const TriggerTrainConfig& config);
/// BCE(D(real), 1) + BCE(D(fake), 0).
ag::Var discriminator_loss(const DiscriminatorNet& discriminator, const ag::Var& real, const ag::Var& fake);

/// All loss terms for one image, evaluated without updating anything.
LossTerms compute_losses(const ImageSample& image, const ImageSample& poisoned, std::span<const double> delta,
                         const InvariantMask& mask, const ImageSample& reference,
                         const DiscriminatorNet& discriminator, const DifferentiableImageEmbedder& embedder,
                         const TriggerTrainConfig& config);

struct TrainingSample {
  ImageSample image;
  InvariantMask mask;
};

struct EpochLog {
  int epoch = 0;
  int steps = 0;
  LossTerms mean;
};

struct TriggerTrainResult {
  GeneratorNet generator;
  DiscriminatorNet discriminator;
  std::vector<EpochLog> log;
  std::vector<LossTerms> step_log;
};

/// Alternating discriminator then generator Adam steps, one pair per batch.
TriggerTrainResult train_trigger_generator(std::span<const TrainingSample> samples, const PatchTrigger& trigger,
                                           const DifferentiableImageEmbedder& embedder,
                                           const TriggerTrainConfig& config, std::uint64_t seed);

/// Fraction of squared perturbation that falls inside the mask; 1 for a zero perturbation.
double mask_energy_ratio(std::span<const double> delta, const InvariantMask& mask);

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log);

void save_generator(const std::filesystem::path& path, const GeneratorNet& generator, nlohmann::json config);
GeneratorNet load_generator(const std::filesystem::path& path);
void save_discriminator(const std::filesystem::path& path, const DiscriminatorNet& discriminator,
                        nlohmann::json config);
DiscriminatorNet load_discriminator(const std::filesystem::path& path);

}  // namespace badcm
