#pragma once

// Adapter for surrogate models served out of process over HTTP+JSON.
//
//   POST /embed_image      {"height","width","pixels":[H*W*3 floats, row-major RGB]} -> {"values":[D floats]}
//   POST /embed_text       {"tokens":[...], "raw": "..."}                              -> {"values":[D floats]}
//   POST /propose_regions  {"height","width","pixels":[...]}
//                          -> {"boxes":[{"top","left","height","width","score"}]}
//   POST /mask_candidates  {"tokens":[...], "position":i, "limit":N}                   -> {"words":[...]}
//
// Vectors whose length differs from the declared dimension are rejected.

#include <memory>
#include <string>

#include "badcm/surrogate.hpp"

namespace badcm {

struct HttpSurrogateConfig {
  std::string endpoint;  // e.g. "http://127.0.0.1:8080"
  int image_dim = 512;
  int text_dim = 512;
  double min_confidence = 0.0;  // detector boxes below this score are dropped
  int max_proposals = 36;
  int timeout_seconds = 30;
};

class HttpSurrogateClient;

class HttpImageEmbedder final : public ImageEmbedder {
 public:
  explicit HttpImageEmbedder(std::shared_ptr<HttpSurrogateClient> client);
  int dimension() const override;
  EmbeddingVector embed_image(const ImageSample& image) const override;
  std::uint64_t checksum() const override;

 private:
  std::shared_ptr<HttpSurrogateClient> client_;
};

class HttpTextEmbedder final : public TextEmbedder {
 public:
  explicit HttpTextEmbedder(std::shared_ptr<HttpSurrogateClient> client);
  int dimension() const override;
  EmbeddingVector embed_text(const TextSample& text) const override;

 private:
  std::shared_ptr<HttpSurrogateClient> client_;
};

/// Clips detector boxes to the image, drops empty or low-confidence ones,
/// and keeps the highest-scoring min(max_regions, max_proposals).
class HttpRegionProposer final : public RegionProposer {
 public:
  explicit HttpRegionProposer(std::shared_ptr<HttpSurrogateClient> client);
  std::vector<RegionProposal> propose_regions(const ImageSample& image, int max_regions) const override;

 private:
  std::shared_ptr<HttpSurrogateClient> client_;
};

class HttpCandidateOracle final : public CandidateOracle {
 public:
  explicit HttpCandidateOracle(std::shared_ptr<HttpSurrogateClient> client);

 protected:
  std::vector<std::string> ranked_candidates(const TextSample& text, std::size_t position, int limit) const override;

 private:
  std::shared_ptr<HttpSurrogateClient> client_;
};

std::shared_ptr<HttpSurrogateClient> make_http_client(const HttpSurrogateConfig& config);

}  // namespace badcm
