#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "badcm/autograd.hpp"
#include "badcm/random.hpp"

namespace badcm::nn {

struct NamedParameter {
  std::string name;
  ag::Var var;
};

/// He-style uniform initialisation for a layer with `fan_in` inputs.
std::vector<double> init_uniform(std::size_t count, std::size_t fan_in, Rng& rng);

struct Conv2d {
  ag::Var weight;  // [out, in, k, k]
  ag::Var bias;    // [out]
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(int in, int out, int kernel, int stride, int pad, Rng& rng);
  ag::Var operator()(const ag::Var& x) const { return ag::conv2d(x, weight, bias, stride, pad); }
};

struct Linear {
  ag::Var weight;  // [out, in]
  ag::Var bias;    // [out]

  Linear() = default;
  Linear(int in, int out, Rng& rng);
  ag::Var operator()(const ag::Var& x) const { return ag::linear(x, weight, bias); }
};

/// Adaptive-moment optimizer over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<ag::Var> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void zero_grad();
  /// Applies one update from the currently accumulated gradients.
  void step();
  std::int64_t steps() const { return t_; }

 private:
  std::vector<ag::Var> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

/// Order-sensitive hash of parameter values, used to prove a network was not modified.
std::uint64_t checksum(const std::vector<NamedParameter>& params);

std::size_t parameter_count(const std::vector<NamedParameter>& params);

// Checkpoint layout (little-endian):
//   magic "BADCMCKP", u32 version, u64 config length, config JSON bytes,
//   u64 tensor count, then per tensor: u64 name length, name, u64 numel, f64 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config,
                     const std::vector<NamedParameter>& params);

struct Checkpoint {
  nlohmann::json config;
  std::vector<std::pair<std::string, std::vector<double>>> tensors;
};

Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint tensors into `params`, matching by name and size.
void load_parameters(const Checkpoint& ckpt, std::vector<NamedParameter>& params);

}  // namespace badcm::nn
