#include "badcm/http_surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "httplib.h"
#include "json.hpp"

#include "badcm/error.hpp"
#include "badcm/random.hpp"

namespace badcm {

using nlohmann::json;

class HttpSurrogateClient {
 public:
  explicit HttpSurrogateClient(HttpSurrogateConfig config) : config_(std::move(config)), client_(config_.endpoint) {
    if (config_.endpoint.empty()) throw BackendError("external surrogate endpoint is not configured");
    client_.set_connection_timeout(config_.timeout_seconds);
    client_.set_read_timeout(config_.timeout_seconds);
  }

  const HttpSurrogateConfig& config() const { return config_; }

  json post(const std::string& route, const json& body) {
    std::lock_guard lock(mutex_);
    auto res = client_.Post(route, body.dump(), "application/json");
    if (!res) throw BackendError("surrogate request " + route + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw BackendError("surrogate request " + route + " returned HTTP " + std::to_string(res->status));
    try {
      return json::parse(res->body);
    } catch (const json::exception& e) {
      throw BackendError("surrogate response for " + route + " is not JSON: " + e.what());
    }
  }

 private:
  HttpSurrogateConfig config_;
  std::mutex mutex_;
  httplib::Client client_;
};

std::shared_ptr<HttpSurrogateClient> make_http_client(const HttpSurrogateConfig& config) {
  return std::make_shared<HttpSurrogateClient>(config);
}

namespace {

json image_payload(const ImageSample& image) {
  return json{{"height", image.height()},
              {"width", image.width()},
              {"pixels", std::vector<double>(image.pixels().begin(), image.pixels().end())}};
}

EmbeddingVector read_vector(const json& j, int expected_dim, const char* route) {
  try {
    EmbeddingVector v{j.at("values").get<std::vector<double>>()};
    if (v.dim() != expected_dim)
      throw BackendError(std::string(route) + ": expected dimension " + std::to_string(expected_dim) + ", got " +
                         std::to_string(v.dim()));
    for (double x : v.values)
      if (!std::isfinite(x)) throw BackendError(std::string(route) + ": non-finite embedding value");
    return v;
  } catch (const json::exception& e) {
    throw BackendError(std::string(route) + ": malformed response: " + e.what());
  }
}

}  // namespace

HttpImageEmbedder::HttpImageEmbedder(std::shared_ptr<HttpSurrogateClient> client) : client_(std::move(client)) {}
int HttpImageEmbedder::dimension() const { return client_->config().image_dim; }
EmbeddingVector HttpImageEmbedder::embed_image(const ImageSample& image) const {
  return read_vector(client_->post("/embed_image", image_payload(image)), dimension(), "/embed_image");
}
std::uint64_t HttpImageEmbedder::checksum() const { return fnv1a(client_->config().endpoint); }

HttpTextEmbedder::HttpTextEmbedder(std::shared_ptr<HttpSurrogateClient> client) : client_(std::move(client)) {}
int HttpTextEmbedder::dimension() const { return client_->config().text_dim; }
EmbeddingVector HttpTextEmbedder::embed_text(const TextSample& text) const {
  return read_vector(client_->post("/embed_text", json{{"tokens", text.tokens()}, {"raw", text.raw()}}), dimension(),
                     "/embed_text");
}

HttpRegionProposer::HttpRegionProposer(std::shared_ptr<HttpSurrogateClient> client) : client_(std::move(client)) {}

std::vector<RegionProposal> HttpRegionProposer::propose_regions(const ImageSample& image, int max_regions) const {
  if (max_regions < 1) throw ValidationError("max_regions must be at least 1");
  const json res = client_->post("/propose_regions", image_payload(image));
  struct Scored {
    RegionProposal box;
    double score;
  };
  std::vector<Scored> boxes;
  try {
    for (const auto& b : res.at("boxes")) {
      const double score = b.value("score", 1.0);
      if (score < client_->config().min_confidence) continue;
      int top = std::max(0, b.at("top").get<int>());
      int left = std::max(0, b.at("left").get<int>());
      int bottom = std::min(image.height(), b.at("top").get<int>() + b.at("height").get<int>());
      int right = std::min(image.width(), b.at("left").get<int>() + b.at("width").get<int>());
      if (bottom <= top || right <= left) continue;
      boxes.push_back({{top, left, bottom - top, right - left}, score});
    }
  } catch (const json::exception& e) {
    throw BackendError(std::string("/propose_regions: malformed response: ") + e.what());
  }
  std::stable_sort(boxes.begin(), boxes.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  const auto keep = static_cast<std::size_t>(std::min(max_regions, client_->config().max_proposals));
  std::vector<RegionProposal> out;
  for (std::size_t i = 0; i < boxes.size() && i < keep; ++i) out.push_back(boxes[i].box);
  if (out.empty()) out.push_back({0, 0, image.height(), image.width()});
  return out;
}

HttpCandidateOracle::HttpCandidateOracle(std::shared_ptr<HttpSurrogateClient> client) : client_(std::move(client)) {}

std::vector<std::string> HttpCandidateOracle::ranked_candidates(const TextSample& text, std::size_t position,
                                                                int limit) const {
  const json res =
      client_->post("/mask_candidates", json{{"tokens", text.tokens()}, {"position", position}, {"limit", limit}});
  try {
    return res.at("words").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw BackendError(std::string("/mask_candidates: malformed response: ") + e.what());
  }
}

}  // namespace badcm
