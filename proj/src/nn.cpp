#include "badcm/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "badcm/error.hpp"

namespace badcm::nn {

std::vector<double> init_uniform(std::size_t count, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> v(count);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return v;
}

Conv2d::Conv2d(int in, int out, int kernel, int stride_, int pad_, Rng& rng) : stride(stride_), pad(pad_) {
  const std::size_t fan_in = static_cast<std::size_t>(in) * kernel * kernel;
  weight = ag::Var::parameter({out, in, kernel, kernel}, init_uniform(fan_in * out, fan_in, rng));
  bias = ag::Var::parameter({out}, std::vector<double>(out, 0.0));
}

Linear::Linear(int in, int out, Rng& rng) {
  weight = ag::Var::parameter({out, in}, init_uniform(static_cast<std::size_t>(in) * out, in, rng));
  bias = ag::Var::parameter({out}, std::vector<double>(out, 0.0));
}

Adam::Adam(std::vector<ag::Var> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto g = params_[k].grad();
    if (g.empty()) continue;
    auto w = params_[k].mutable_value();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

std::uint64_t checksum(const std::vector<NamedParameter>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    h = fnv1a(p.name, h);
    for (double x : p.var.value()) {
      auto bits = std::bit_cast<std::uint64_t>(x);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

std::size_t parameter_count(const std::vector<NamedParameter>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.var.numel();
  return n;
}

namespace {

constexpr char kMagic[8] = {'B', 'A', 'D', 'C', 'M', 'C', 'K', 'P'};

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian host");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated checkpoint: " + path.string());
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config,
                     const std::vector<NamedParameter>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  const std::string cfg = config.dump();
  put<std::uint64_t>(os, cfg.size());
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  put<std::uint64_t>(os, params.size());
  for (const auto& p : params) {
    put<std::uint64_t>(os, p.name.size());
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint64_t>(os, p.var.numel());
    for (double x : p.var.value()) put<double>(os, x);
  }
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("not a checkpoint file: " + path.string());
  const auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  std::string cfg(get<std::uint64_t>(is, path), '\0');
  is.read(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  ckpt.config = nlohmann::json::parse(cfg);
  const auto count = get<std::uint64_t>(is, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(get<std::uint64_t>(is, path), '\0');
    is.read(name.data(), static_cast<std::streamsize>(name.size()));
    std::vector<double> values(get<std::uint64_t>(is, path));
    for (auto& x : values) x = get<double>(is, path);
    ckpt.tensors.emplace_back(std::move(name), std::move(values));
  }
  return ckpt;
}

void load_parameters(const Checkpoint& ckpt, std::vector<NamedParameter>& params) {
  if (ckpt.tensors.size() != params.size()) throw IoError("checkpoint tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, values] = ckpt.tensors[i];
    if (name != params[i].name || values.size() != params[i].var.numel())
      throw IoError("checkpoint tensor mismatch at '" + params[i].name + "'");
    std::copy(values.begin(), values.end(), params[i].var.mutable_value().begin());
  }
}

}  // namespace badcm::nn
