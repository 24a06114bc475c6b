#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace badcm {

/// Multi-hot category membership of length C.
class LabelVector {
 public:
  LabelVector() = default;
  explicit LabelVector(std::vector<std::uint8_t> bits);

  static LabelVector from_indices(int categories, std::span<const int> indices);
  /// Vector with exactly bit `index` set.
  static LabelVector single(int categories, int index);

  int size() const { return static_cast<int>(bits_.size()); }
  bool test(int i) const { return bits_.at(static_cast<std::size_t>(i)) != 0; }
  int popcount() const;
  std::vector<int> indices() const;
  bool intersects(const LabelVector& other) const;
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  friend bool operator==(const LabelVector&, const LabelVector&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// RGB image with values in [0,1], stored row-major H x W x 3.
class ImageSample {
 public:
  ImageSample() = default;
  ImageSample(int height, int width, std::vector<double> pixels, std::string source_path = {});

  static ImageSample filled(int height, int width, std::array<double, 3> rgb);

  int height() const { return height_; }
  int width() const { return width_; }
  std::span<const double> pixels() const { return pixels_; }
  const std::string& source_path() const { return source_path_; }

  double at(int y, int x, int c) const { return pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }
  std::size_t index(int y, int x, int c) const { return (static_cast<std::size_t>(y) * width_ + x) * 3 + c; }

  /// Planar C x H x W copy, the layout the networks consume.
  std::vector<double> to_chw() const;
  static ImageSample from_chw(int height, int width, std::span<const double> chw);

  /// Bilinear resampling to a square size.
  ImageSample resized(int height, int width) const;

  friend bool operator==(const ImageSample& a, const ImageSample& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.pixels_ == b.pixels_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> pixels_;
  std::string source_path_;
};

/// Lowercases and splits on whitespace and ASCII punctuation; punctuation marks are kept as tokens.
struct Token {
  std::string text;
  std::size_t offset = 0;  // byte span in the raw string
  std::size_t length = 0;
};

std::vector<Token> tokenize(std::string_view raw);
bool is_punctuation_token(std::string_view token);
/// Joins tokens with single spaces, without a space before punctuation.
std::string detokenize(std::span<const std::string> tokens);

class TextSample {
 public:
  TextSample() = default;
  explicit TextSample(std::string raw);

  const std::string& raw() const { return raw_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }

  /// Substitutes whole tokens. The raw string is spliced at the original
  /// spans, with each replacement matched to the capitalisation of the word it replaces.
  TextSample with_replacements(const std::map<std::size_t, std::string>& replacements) const;

  friend bool operator==(const TextSample& a, const TextSample& b) {
    return a.raw_ == b.raw_ && a.tokens_ == b.tokens_;
  }

 private:
  std::string raw_;
  std::vector<std::string> tokens_;
  std::vector<std::pair<std::size_t, std::size_t>> spans_;
};

/// Applies the capitalisation pattern of `original` (all caps, leading cap, lower) to `word`.
std::string match_case(std::string_view original, std::string_view word);

/// Image that is decoded from disk on first access, or held in memory.
/// Copies share the decoded pixels.
class ImageHandle {
 public:
  ImageHandle() = default;
  explicit ImageHandle(ImageSample image);
  /// `resize_to` > 0 resamples on load to resize_to x resize_to.
  ImageHandle(std::filesystem::path path, int resize_to);

  const ImageSample& get() const;
  const std::filesystem::path& path() const;

 private:
  struct State;
  std::shared_ptr<State> state_;
};

struct PairedInstance {
  std::string id;
  ImageHandle image;
  TextSample text;
  LabelVector label;
};

enum class Split { Train, Query, Retrieval };
std::string to_string(Split split);
Split split_from_string(std::string_view s);

struct DatasetManifest {
  std::vector<PairedInstance> instances;
  int categories = 0;
  Split split = Split::Train;

  const PairedInstance& find(std::string_view id) const;
  bool contains(std::string_view id) const;
};

enum class Modality { Image, Text, Both };
std::string to_string(Modality m);
Modality modality_from_string(std::string_view s);

/// One poisoned instance in a provenance file.
struct PoisonRecord {
  std::string id;
  Modality modality = Modality::Image;
  LabelVector original_label;
  LabelVector assigned_label;
  std::string mask_ref;   // id of the mining sidecar record, empty when no image was poisoned
  std::string trace_ref;  // id of the substitution trace, empty when no text was poisoned
};

struct LoadOptions {
  int image_size = 0;  // 0 keeps stored size
};

// Manifest files are line-delimited JSON. Line 1 is a header
// {"format":"badcm-manifest","categories":C,"split":"train"}; each following
// line is {"id","image_path","text","labels":[indices]} with image_path
// relative to the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path, const LoadOptions& options = {});
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Largest-remainder allocation of `total` items to the given fractions.
std::array<std::size_t, 3> split_sizes(std::size_t total, const std::array<double, 3>& fractions);

/// Deterministic shuffled partition into (train, query, retrieval).
std::array<DatasetManifest, 3> split_dataset(const DatasetManifest& manifest, const std::array<double, 3>& fractions,
                                             std::uint64_t seed);

/// Writes images/ (PNG), manifest.jsonl and provenance.jsonl into out_dir.
void save_poisoned_dataset(const DatasetManifest& manifest, std::span<const PoisonRecord> provenance,
                           const std::filesystem::path& out_dir);

std::vector<PoisonRecord> load_provenance(const std::filesystem::path& path, int categories);

// PNG I/O. Pixels are quantised to 8 bits on write.
ImageSample read_png(const std::filesystem::path& path);
void write_png(const ImageSample& image, const std::filesystem::path& path);
/// Round-trips through 8-bit quantisation without touching disk.
ImageSample quantize_8bit(const ImageSample& image);

}  // namespace badcm
