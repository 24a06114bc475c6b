#include "badcm/datamodel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <optional>

#include "json.hpp"

#include "badcm/error.hpp"
#include "badcm/random.hpp"

namespace badcm {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- LabelVector

LabelVector::LabelVector(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto b : bits_)
    if (b > 1) throw ValidationError("label bits must be 0 or 1");
}

LabelVector LabelVector::from_indices(int categories, std::span<const int> indices) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(categories), 0);
  for (int i : indices) {
    if (i < 0 || i >= categories)
      throw ValidationError("label index " + std::to_string(i) + " outside [0, " + std::to_string(categories) + ")");
    bits[static_cast<std::size_t>(i)] = 1;
  }
  return LabelVector(std::move(bits));
}

LabelVector LabelVector::single(int categories, int index) {
  const int idx[] = {index};
  return from_indices(categories, idx);
}

int LabelVector::popcount() const { return static_cast<int>(std::count(bits_.begin(), bits_.end(), 1)); }

std::vector<int> LabelVector::indices() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < bits_.size(); ++i)
    if (bits_[i]) out.push_back(static_cast<int>(i));
  return out;
}

bool LabelVector::intersects(const LabelVector& other) const {
  const std::size_t n = std::min(bits_.size(), other.bits_.size());
  for (std::size_t i = 0; i < n; ++i)
    if (bits_[i] && other.bits_[i]) return true;
  return false;
}

// ---------------------------------------------------------------- ImageSample

ImageSample::ImageSample(int height, int width, std::vector<double> pixels, std::string source_path)
    : height_(height), width_(width), pixels_(std::move(pixels)), source_path_(std::move(source_path)) {
  if (height <= 0 || width <= 0) throw ValidationError("image dimensions must be positive");
  if (pixels_.size() != static_cast<std::size_t>(height) * width * 3)
    throw ValidationError("pixel buffer does not match " + std::to_string(height) + "x" + std::to_string(width) + "x3");
  for (double v : pixels_)
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("pixel value outside [0,1]");
}

ImageSample ImageSample::filled(int height, int width, std::array<double, 3> rgb) {
  std::vector<double> px(static_cast<std::size_t>(height) * width * 3);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = rgb[i % 3];
  return ImageSample(height, width, std::move(px));
}

std::vector<double> ImageSample::to_chw() const {
  const std::size_t plane = static_cast<std::size_t>(height_) * width_;
  std::vector<double> out(plane * 3);
  for (std::size_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c) out[c * plane + p] = pixels_[p * 3 + c];
  return out;
}

ImageSample ImageSample::from_chw(int height, int width, std::span<const double> chw) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  if (chw.size() != plane * 3) throw ValidationError("from_chw: size mismatch");
  std::vector<double> px(plane * 3);
  for (std::size_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c) px[p * 3 + c] = chw[c * plane + p];
  return ImageSample(height, width, std::move(px));
}

ImageSample ImageSample::resized(int height, int width) const {
  if (height == height_ && width == width_) return *this;
  std::vector<double> px(static_cast<std::size_t>(height) * width * 3);
  const double sy = static_cast<double>(height_) / height, sx = static_cast<double>(width_) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, height_ - 1.0);
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, height_ - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, width_ - 1.0);
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, width_ - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = at(y0, x0, c) * (1 - wx) + at(y0, x1, c) * wx;
        const double bot = at(y1, x0, c) * (1 - wx) + at(y1, x1, c) * wx;
        px[(static_cast<std::size_t>(y) * width + x) * 3 + c] = std::clamp(top * (1 - wy) + bot * wy, 0.0, 1.0);
      }
    }
  }
  return ImageSample(height, width, std::move(px), source_path_);
}

// ---------------------------------------------------------------- text

bool is_punctuation_token(std::string_view token) {
  return token.size() == 1 && std::ispunct(static_cast<unsigned char>(token[0]));
}

std::vector<Token> tokenize(std::string_view raw) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < raw.size()) {
    const auto c = static_cast<unsigned char>(raw[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (std::ispunct(c)) {
      out.push_back({std::string(1, static_cast<char>(c)), i, 1});
      ++i;
    } else {
      const std::size_t start = i;
      std::string word;
      while (i < raw.size()) {
        const auto d = static_cast<unsigned char>(raw[i]);
        if (std::isspace(d) || std::ispunct(d)) break;
        word.push_back(static_cast<char>(std::tolower(d)));
        ++i;
      }
      out.push_back({std::move(word), start, i - start});
    }
  }
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && !is_punctuation_token(tokens[i])) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string match_case(std::string_view original, std::string_view word) {
  bool any_alpha = false, all_upper = true;
  for (unsigned char c : original) {
    if (std::isalpha(c)) {
      any_alpha = true;
      if (!std::isupper(c)) all_upper = false;
    }
  }
  std::string out(word);
  if (!any_alpha) return out;
  if (all_upper && original.size() > 1) {
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  } else if (std::isupper(static_cast<unsigned char>(original[0])) && !out.empty()) {
    out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  }
  return out;
}

TextSample::TextSample(std::string raw) : raw_(std::move(raw)) {
  for (auto& t : tokenize(raw_)) {
    tokens_.push_back(std::move(t.text));
    spans_.emplace_back(t.offset, t.length);
  }
}

TextSample TextSample::with_replacements(const std::map<std::size_t, std::string>& replacements) const {
  TextSample out;
  out.tokens_ = tokens_;
  out.spans_.reserve(spans_.size());
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto [off, len] = spans_[i];
    out.raw_.append(raw_, cursor, off - cursor);
    const std::size_t new_off = out.raw_.size();
    if (auto it = replacements.find(i); it != replacements.end()) {
      const std::string word = match_case(std::string_view(raw_).substr(off, len), it->second);
      out.raw_ += word;
      std::string lowered = it->second;
      // Bracketed special tokens such as [MASK] are kept verbatim.
      if (!(lowered.size() > 2 && lowered.front() == '[' && lowered.back() == ']'))
        for (auto& c : lowered) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      out.tokens_[i] = std::move(lowered);
      out.spans_.emplace_back(new_off, word.size());
    } else {
      out.raw_.append(raw_, off, len);
      out.spans_.emplace_back(new_off, len);
    }
    cursor = off + len;
  }
  for (const auto& [pos, _] : replacements)
    if (pos >= tokens_.size()) throw ValidationError("replacement position " + std::to_string(pos) + " out of range");
  out.raw_.append(raw_, cursor, std::string::npos);
  return out;
}

// ---------------------------------------------------------------- ImageHandle

struct ImageHandle::State {
  fs::path path;
  int resize_to = 0;
  std::once_flag once;
  std::optional<ImageSample> image;
};

ImageHandle::ImageHandle(ImageSample image) : state_(std::make_shared<State>()) {
  state_->path = image.source_path();
  state_->image = std::move(image);
  std::call_once(state_->once, [] {});
}

ImageHandle::ImageHandle(fs::path path, int resize_to) : state_(std::make_shared<State>()) {
  state_->path = std::move(path);
  state_->resize_to = resize_to;
}

const ImageSample& ImageHandle::get() const {
  if (!state_) throw ValidationError("empty image handle");
  std::call_once(state_->once, [s = state_.get()] {
    ImageSample img = read_png(s->path);
    if (s->resize_to > 0) img = img.resized(s->resize_to, s->resize_to);
    s->image = std::move(img);
  });
  return *state_->image;
}

const fs::path& ImageHandle::path() const {
  static const fs::path empty;
  return state_ ? state_->path : empty;
}

// ---------------------------------------------------------------- enums

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Query: return "query";
    case Split::Retrieval: return "retrieval";
  }
  return "train";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "query") return Split::Query;
  if (s == "retrieval") return Split::Retrieval;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

std::string to_string(Modality m) {
  switch (m) {
    case Modality::Image: return "image";
    case Modality::Text: return "text";
    case Modality::Both: return "both";
  }
  return "image";
}

Modality modality_from_string(std::string_view s) {
  if (s == "image") return Modality::Image;
  if (s == "text") return Modality::Text;
  if (s == "both") return Modality::Both;
  throw ValidationError("unknown modality '" + std::string(s) + "'");
}

const PairedInstance& DatasetManifest::find(std::string_view id) const {
  for (const auto& inst : instances)
    if (inst.id == id) return inst;
  throw ValidationError("unknown instance id '" + std::string(id) + "'");
}

bool DatasetManifest::contains(std::string_view id) const {
  return std::any_of(instances.begin(), instances.end(), [&](const auto& i) { return i.id == id; });
}

// ---------------------------------------------------------------- manifest I/O

DatasetManifest load_manifest(const fs::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  DatasetManifest m;
  const fs::path base = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  std::vector<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
    }
    if (!rec.is_object()) throw ParseError("record is not an object", lineno);
    if (!have_header) {
      if (!rec.contains("categories") || !rec["categories"].is_number_integer())
        throw ParseError("header must declare integer 'categories'", lineno);
      m.categories = rec["categories"].get<int>();
      if (m.categories <= 0) throw ParseError("categories must be positive", lineno);
      if (rec.contains("split")) m.split = split_from_string(rec["split"].get<std::string>());
      have_header = true;
      continue;
    }
    PairedInstance inst;
    try {
      inst.id = rec.at("id").get<std::string>();
      const auto image_path = rec.at("image_path").get<std::string>();
      inst.text = TextSample(rec.at("text").get<std::string>());
      const auto labels = rec.at("labels").get<std::vector<int>>();
      for (int l : labels)
        if (l < 0 || l >= m.categories)
          throw ValidationError("line " + std::to_string(lineno) + ": label index " + std::to_string(l) +
                                " >= C=" + std::to_string(m.categories));
      inst.label = LabelVector::from_indices(m.categories, labels);
      fs::path ip(image_path);
      inst.image = ImageHandle(ip.is_absolute() ? ip : base / ip, options.image_size);
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad record: ") + e.what(), lineno);
    }
    if (inst.text.size() == 0) throw ParseError("text has no tokens", lineno);
    if (std::find(seen.begin(), seen.end(), inst.id) != seen.end())
      throw ValidationError("line " + std::to_string(lineno) + ": duplicate id '" + inst.id + "'");
    seen.push_back(inst.id);
    m.instances.push_back(std::move(inst));
  }
  return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  const fs::path base = fs::absolute(path).parent_path();
  out << json{{"format", "badcm-manifest"}, {"categories", manifest.categories}, {"split", to_string(manifest.split)}}.dump()
      << '\n';
  for (const auto& inst : manifest.instances) {
    if (inst.image.path().empty()) throw ValidationError("instance '" + inst.id + "' has no image file");
    const fs::path abs = fs::absolute(inst.image.path()).lexically_normal();
    const fs::path rel = abs.lexically_relative(base);
    out << json{{"id", inst.id},
                {"image_path", rel.empty() ? abs.string() : rel.generic_string()},
                {"text", inst.text.raw()},
                {"labels", inst.label.indices()}}
               .dump()
        << '\n';
  }
  if (!out) throw IoError("failed writing manifest: " + path.string());
}

// ---------------------------------------------------------------- splitting

std::array<std::size_t, 3> split_sizes(std::size_t total, const std::array<double, 3>& fractions) {
  double s = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ValidationError("split fractions must be positive");
    s += f;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = fractions[i] * static_cast<double>(total);
    sizes[i] = static_cast<std::size_t>(std::floor(exact));
    rem[i] = exact - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++sizes[order[k % 3]];
  return sizes;
}

std::array<DatasetManifest, 3> split_dataset(const DatasetManifest& manifest, const std::array<double, 3>& fractions,
                                             std::uint64_t seed) {
  const auto sizes = split_sizes(manifest.instances.size(), fractions);
  std::vector<std::size_t> order(manifest.instances.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span(order));
  std::array<DatasetManifest, 3> out;
  const Split kinds[] = {Split::Train, Split::Query, Split::Retrieval};
  std::size_t cursor = 0;
  for (int part = 0; part < 3; ++part) {
    out[part].categories = manifest.categories;
    out[part].split = kinds[part];
    std::vector<std::size_t> idx(order.begin() + cursor, order.begin() + cursor + sizes[part]);
    std::sort(idx.begin(), idx.end());
    for (auto i : idx) out[part].instances.push_back(manifest.instances[i]);
    cursor += sizes[part];
  }
  return out;
}

// ---------------------------------------------------------------- poisoned dataset

namespace {

std::string file_stem_for(std::size_t index, const std::string& id) {
  std::string safe;
  for (char c : id) safe.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
  char prefix[16];
  std::snprintf(prefix, sizeof(prefix), "%06zu_", index);
  return prefix + safe;
}

}  // namespace

void save_poisoned_dataset(const DatasetManifest& manifest, std::span<const PoisonRecord> provenance,
                           const fs::path& out_dir) {
  for (const auto& rec : provenance)
    if (!manifest.contains(rec.id)) throw ValidationError("provenance references unknown id '" + rec.id + "'");

  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  DatasetManifest written;
  written.categories = manifest.categories;
  written.split = manifest.split;
  for (std::size_t i = 0; i < manifest.instances.size(); ++i) {
    const auto& inst = manifest.instances[i];
    const fs::path img_path = out_dir / "images" / (file_stem_for(i, inst.id) + ".png");
    write_png(inst.image.get(), img_path);
    PairedInstance copy = inst;
    copy.image = ImageHandle(img_path, 0);
    written.instances.push_back(std::move(copy));
  }
  write_manifest(written, out_dir / "manifest.jsonl");

  std::ofstream prov(out_dir / "provenance.jsonl", std::ios::trunc);
  if (!prov) throw IoError("cannot write provenance in " + out_dir.string());
  for (const auto& rec : provenance) {
    const auto target = rec.assigned_label.indices();
    json j{{"id", rec.id},
           {"modality", to_string(rec.modality)},
           {"original_labels", rec.original_label.indices()},
           {"target_label", target.size() == 1 ? json(target[0]) : json(target)}};
    if (!rec.mask_ref.empty()) j["mask_ref"] = rec.mask_ref;
    if (!rec.trace_ref.empty()) j["trace_ref"] = rec.trace_ref;
    prov << j.dump() << '\n';
  }
  if (!prov) throw IoError("failed writing provenance in " + out_dir.string());
}

std::vector<PoisonRecord> load_provenance(const fs::path& path, int categories) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open provenance: " + path.string());
  std::vector<PoisonRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      PoisonRecord r;
      r.id = j.at("id").get<std::string>();
      r.modality = modality_from_string(j.at("modality").get<std::string>());
      r.original_label = LabelVector::from_indices(categories, j.at("original_labels").get<std::vector<int>>());
      r.assigned_label = LabelVector::single(categories, j.at("target_label").get<int>());
      r.mask_ref = j.value("mask_ref", "");
      r.trace_ref = j.value("trace_ref", "");
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return out;
}

}  // namespace badcm
