#pragma once

// Shared fixtures and generators for the unit and acceptance tests.

#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <functional>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "badcm/autograd.hpp"
#include "badcm/datamodel.hpp"
#include "badcm/error.hpp"
#include "badcm/random.hpp"
#include "badcm/surrogate.hpp"
#include "badcm/textual_trigger.hpp"

namespace badcm::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("badcm-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline ImageSample random_image(Rng& rng, int h, int w) {
  std::vector<double> px(static_cast<std::size_t>(h) * w * 3);
  for (double& v : px) v = rng.uniform();
  return ImageSample(h, w, std::move(px));
}

/// Smooth image with one bright blob, closer to the toy data than noise.
inline ImageSample blob_image(Rng& rng, int h, int w) {
  const double cy = rng.uniform(0.2, 0.8) * h, cx = rng.uniform(0.2, 0.8) * w, r = rng.uniform(0.15, 0.3) * w;
  std::array<double, 3> fg{rng.uniform(), rng.uniform(), rng.uniform()};
  std::array<double, 3> bg{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7)};
  std::vector<double> px(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d = std::hypot(y - cy, x - cx);
      const double a = d < r ? 1.0 : 0.0;
      for (int c = 0; c < 3; ++c)
        px[(static_cast<std::size_t>(y) * w + x) * 3 + c] = a * fg[c] + (1 - a) * (bg[c] + 0.1 * x / w);
    }
  for (double& v : px) v = std::clamp(v, 0.0, 1.0);
  return ImageSample(h, w, std::move(px));
}

inline const std::vector<std::string>& fixture_words() {
  static const std::vector<std::string> words{"man",   "dog",    "car",   "red",   "tree",  "runs",  "big",
                                              "small", "street", "green", "apple", "house", "woman", "ball",
                                              "sky",   "blue",   "water", "child", "cat",   "field"};
  return words;
}

/// Sentence of `n` tokens mixing content words and stop words.
inline TextSample random_text(Rng& rng, int n) {
  static const std::vector<std::string> stops{"a", "the", "on", "in", "of", "is"};
  std::string s;
  for (int i = 0; i < n; ++i) {
    if (i) s += ' ';
    if (rng.uniform() < 0.25)
      s += stops[rng.below(stops.size())];
    else
      s += fixture_words()[rng.below(fixture_words().size())];
  }
  return TextSample(s);
}

inline std::vector<double> random_vector(Rng& rng, int d) {
  std::vector<double> v(static_cast<std::size_t>(d));
  for (double& x : v) x = rng.normal();
  return v;
}

/// Manifest of in-memory instances with blob images and random texts.
inline DatasetManifest random_manifest(Rng& rng, int n, int categories, int size = 8) {
  DatasetManifest m;
  m.categories = categories;
  for (int i = 0; i < n; ++i) {
    PairedInstance p;
    char id[16];
    std::snprintf(id, sizeof(id), "inst%04d", i);
    p.id = id;
    p.image = ImageHandle(blob_image(rng, size, size));
    p.text = random_text(rng, 6);
    std::vector<int> labels{static_cast<int>(rng.below(static_cast<std::uint64_t>(categories)))};
    if (rng.uniform() < 0.3) labels.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(categories))));
    p.label = LabelVector::from_indices(categories, labels);
    m.instances.push_back(std::move(p));
  }
  return m;
}

/// Candidate oracle backed by a fixed word table, bypassing the bundled lexicon.
class TableOracle final : public CandidateOracle {
 public:
  explicit TableOracle(Lexicon table) : table_(std::move(table)) {}

 protected:
  std::vector<std::string> ranked_candidates(const TextSample& text, std::size_t position, int limit) const override {
    auto it = table_.find(text.tokens()[position]);
    if (it == table_.end()) return {};
    std::vector<std::string> out(it->second.begin(),
                                 it->second.begin() + std::min<std::size_t>(it->second.size(), limit));
    return out;
  }

 private:
  Lexicon table_;
};

/// Small greedy-search instance: up to `keywords` content positions, each with at
/// most `max_candidates` table entries drawn from the fixture words.
struct GreedyFixture {
  TextSample text;
  KeywordSelection keywords;
  Lexicon table;
  TextPoisonConfig config;
};

inline GreedyFixture greedy_fixture(Rng& rng, int keywords = 3, int max_candidates = 4) {
  GreedyFixture f;
  f.text = random_text(rng, 7 + static_cast<int>(rng.below(4)));
  const auto& words = fixture_words();
  std::vector<std::size_t> content;
  for (std::size_t i = 0; i < f.text.size(); ++i)
    if (std::find(words.begin(), words.end(), f.text.tokens()[i]) != words.end()) content.push_back(i);
  for (std::size_t i = content.size(); i > 1; --i) std::swap(content[i - 1], content[rng.below(i)]);
  content.resize(std::min<std::size_t>(content.size(), static_cast<std::size_t>(keywords)));
  f.keywords.positions = content;
  for (std::size_t k = 0; k < content.size(); ++k) f.keywords.scores.push_back(1.0 - 0.1 * static_cast<double>(k));
  for (const auto& w : words) {
    auto& list = f.table[w];
    const int n = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_candidates) + 1));
    for (int i = 0; i < n; ++i) list.push_back(words[rng.below(words.size())]);
  }
  static const double targets[] = {0.3, 0.5, 0.7, 0.9, 0.99};
  f.config.s_target = targets[rng.below(5)];
  f.config.candidates = max_candidates;
  return f;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Compares backward() gradients of the scalar `loss()` with central differences
/// over every entry of `params`. Relative error uses max(|a|, |n|, floor) as the scale.
inline GradCheck gradient_check(const std::function<ag::Var()>& loss, std::vector<ag::Var> params, double h = 1e-6,
                                double floor = 1e-6) {
  for (auto& p : params) p.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(p.numel(), 0.0);
  }
  GradCheck r;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto v = params[k].mutable_value();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      v[i] = orig + h;
      const double up = loss().item();
      v[i] = orig - h;
      const double down = loss().item();
      v[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[k][i];
      const double scale = std::max({std::abs(a), std::abs(numeric), floor});
      r.max_rel_error = std::max(r.max_rel_error, std::abs(a - numeric) / scale);
      ++r.checked;
    }
  }
  return r;
}

}  // namespace badcm::testing
