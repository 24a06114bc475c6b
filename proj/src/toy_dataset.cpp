#include "badcm/toy_dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "badcm/error.hpp"
#include "badcm/random.hpp"

namespace badcm {

const std::array<ToyCategory, 8>& toy_categories() {
  static const std::array<ToyCategory, 8> cats{{
      {"apple", "red", {0.85, 0.15, 0.15}},
      {"tree", "green", {0.20, 0.65, 0.20}},
      {"car", "blue", {0.20, 0.30, 0.85}},
      {"banana", "yellow", {0.90, 0.85, 0.20}},
      {"flower", "purple", {0.60, 0.25, 0.70}},
      {"ball", "orange", {0.95, 0.55, 0.10}},
      {"cloud", "white", {0.95, 0.95, 0.95}},
      {"dog", "black", {0.08, 0.08, 0.08}},
  }};
  return cats;
}

namespace {

struct Placement {
  double cy, cx, radius;
  std::string_view size_word;
  std::string_view where;
};

// Signed "inside" distance for each category's silhouette, in pixels.
double silhouette(int category, double dy, double dx, double r) {
  switch (category) {
    case 1:  // triangle-ish tree: cone above a narrow trunk
      return std::min(r - std::abs(dx) * 1.6 - dy * 0.8, r * 0.9 + dy);
    case 2:  // car: wide box
      return std::min(r - std::abs(dx) * 0.75, r * 0.55 - std::abs(dy));
    case 3:  // banana: thin ellipse
      return r - std::sqrt(dx * dx * 0.55 + dy * dy * 3.0);
    case 6:  // cloud: wide ellipse
      return r - std::sqrt(dx * dx * 0.45 + dy * dy * 1.6);
    case 7:  // dog: square
      return r * 0.85 - std::max(std::abs(dx), std::abs(dy));
    default:  // apple, flower, ball: disk
      return r - std::sqrt(dx * dx + dy * dy);
  }
}

Placement place(Rng& rng, int size) {
  static constexpr std::string_view kSizes[] = {"small", "large"};
  const bool large = rng.uniform() < 0.5;
  const double r = size * (large ? rng.uniform(0.20, 0.26) : rng.uniform(0.12, 0.17));
  const int spot = static_cast<int>(rng.below(5));
  const double margin = r + 1.0;
  double cy = size / 2.0, cx = size / 2.0;
  std::string_view where = "in the center";
  switch (spot) {
    case 0: cx = margin + rng.uniform(0, 2); where = "on the left"; break;
    case 1: cx = size - margin - rng.uniform(0, 2); where = "on the right"; break;
    case 2: cy = margin + rng.uniform(0, 2); where = "at the top"; break;
    case 3: cy = size - margin - rng.uniform(0, 2); where = "at the bottom"; break;
    default: cy += rng.uniform(-2, 2); cx += rng.uniform(-2, 2); break;
  }
  return {cy, cx, r, kSizes[large ? 1 : 0], where};
}

void paint(std::vector<double>& px, int size, int category, const Placement& p, const std::array<double, 3>& rgb) {
  constexpr double kSoftness = 1.2;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double inside = silhouette(category, y + 0.5 - p.cy, x + 0.5 - p.cx, p.radius);
      const double a = std::clamp(inside / kSoftness + 0.5, 0.0, 1.0);
      if (a == 0.0) continue;
      for (int c = 0; c < 3; ++c) {
        double& v = px[(static_cast<std::size_t>(y) * size + x) * 3 + c];
        v = v * (1 - a) + rgb[c] * a;
      }
    }
}

std::string caption(Rng& rng, const ToyCategory& cat, const Placement& p) {
  static constexpr std::string_view kLead[] = {"a", "a photo of a", "a picture of a", "there is a"};
  std::string s(kLead[rng.below(4)]);
  s += ' ';
  s += p.size_word;
  s += ' ';
  s += cat.colour;
  s += ' ';
  s += cat.noun;
  s += ' ';
  s += p.where;
  return s;
}

}  // namespace

DatasetManifest generate_toy_dataset(const ToyDatasetOptions& o) {
  if (o.count < 1 || o.image_size < 8) throw ValidationError("toy dataset needs count >= 1 and image_size >= 8");
  const auto& cats = toy_categories();
  Rng rng(mix_seed(o.seed, fnv1a("toy-dataset")));
  DatasetManifest m;
  m.categories = static_cast<int>(cats.size());
  const int S = o.image_size;

  for (int i = 0; i < o.count; ++i) {
    // Smooth two-colour gradient background near mid grey.
    std::array<double, 3> b0{}, b1{};
    for (int c = 0; c < 3; ++c) {
      b0[c] = rng.uniform(0.35, 0.65);
      b1[c] = std::clamp(b0[c] + rng.uniform(-0.15, 0.15), 0.0, 1.0);
    }
    const double angle = rng.uniform(0, 2 * 3.141592653589793);
    const double gy = std::sin(angle), gx = std::cos(angle);
    std::vector<double> px(static_cast<std::size_t>(S) * S * 3);
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        const double t = std::clamp(0.5 + ((y - S / 2.0) * gy + (x - S / 2.0) * gx) / S, 0.0, 1.0);
        for (int c = 0; c < 3; ++c) px[(static_cast<std::size_t>(y) * S + x) * 3 + c] = b0[c] * (1 - t) + b1[c] * t;
      }

    const int first = static_cast<int>(rng.below(cats.size()));
    std::vector<int> labels{first};
    const Placement p1 = place(rng, S);
    auto jitter = [&](const std::array<double, 3>& rgb) {
      std::array<double, 3> out{};
      for (int c = 0; c < 3; ++c) out[c] = std::clamp(rgb[c] + rng.uniform(-0.05, 0.05), 0.0, 1.0);
      return out;
    };
    paint(px, S, first, p1, jitter(cats[first].rgb));
    std::string text = caption(rng, cats[first], p1);

    if (rng.uniform() < o.second_object_rate) {
      int second = static_cast<int>(rng.below(cats.size() - 1));
      if (second >= first) ++second;
      Placement p2 = place(rng, S);
      p2.radius *= 0.8;
      paint(px, S, second, p2, jitter(cats[second].rgb));
      text += " and a ";
      text += cats[second].colour;
      text += ' ';
      text += cats[second].noun;
      text += ' ';
      text += p2.where;
      labels.push_back(second);
    }
    std::sort(labels.begin(), labels.end());

    char id[16];
    std::snprintf(id, sizeof id, "toy%04d", i);
    m.instances.push_back({id, ImageHandle(ImageSample(S, S, std::move(px))), TextSample(text),
                           LabelVector::from_indices(m.categories, labels)});
  }
  return m;
}

std::filesystem::path write_toy_dataset(const std::filesystem::path& dir, const ToyDatasetOptions& options) {
  auto m = generate_toy_dataset(options);
  std::filesystem::create_directories(dir / "images");
  for (auto& inst : m.instances) {
    const auto path = dir / "images" / (inst.id + ".png");
    write_png(inst.image.get(), path);
    inst.image = ImageHandle(path, 0);
  }
  const auto manifest = dir / "manifest.jsonl";
  write_manifest(m, manifest);
  return manifest;
}

}  // namespace badcm
