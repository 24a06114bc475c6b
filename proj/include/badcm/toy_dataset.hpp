#pragma once

// Synthetic paired dataset: soft-edged coloured objects on smooth backgrounds
// with template captions, eight categories.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string_view>

#include "badcm/datamodel.hpp"

namespace badcm {

struct ToyCategory {
  std::string_view noun;
  std::string_view colour;
  std::array<double, 3> rgb;
};

const std::array<ToyCategory, 8>& toy_categories();

struct ToyDatasetOptions {
  int count = 500;
  int image_size = 32;
  double second_object_rate = 0.22;
  std::uint64_t seed = 2024;
};

/// Generates the dataset in memory.
DatasetManifest generate_toy_dataset(const ToyDatasetOptions& options);

/// Generates and writes images/ plus manifest.jsonl into `dir`; returns the manifest path.
std::filesystem::path write_toy_dataset(const std::filesystem::path& dir, const ToyDatasetOptions& options);

}  // namespace badcm
