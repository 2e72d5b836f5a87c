#include "bilevel/remote_embedding.hpp"

#include <fstream>
#include <mutex>
#include <unordered_map>

#include "bilevel/errors.hpp"
#include "bilevel/text.hpp"
#include "http_client.hpp"

namespace bilevel {

struct RemoteEmbeddingProvider::Impl {
  RemoteEmbeddingConfig cfg;
  std::string provider_id;
  mutable JsonHttpClient client;
  mutable std::mutex mutex;      // guards cache/dimension/counters
  mutable std::mutex net_mutex;  // serializes HTTP calls (client keeps state)
  mutable std::unordered_map<std::string, Eigen::VectorXd> cache;  // digest -> vector
  mutable int dimension = 0;
  mutable int remote_calls = 0;

  explicit Impl(RemoteEmbeddingConfig c)
      : cfg(std::move(c)),
        provider_id("remote:" + cfg.model),
        client(cfg.endpoint, cfg.api_key, cfg.timeout_ms, cfg.max_requests_per_second) {
    if (cfg.model.empty()) throw ConfigError("remote embedding: model must be set");
    if (cfg.cache_file.empty()) throw ConfigError("remote embedding: cache_file must be set");
    dimension = cfg.dimension;
    load_cache();
  }

  void load_cache() {
    std::ifstream in(cfg.cache_file);
    if (!in) return;  // created on first write
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || j.value("provider", "") != provider_id) continue;
      const auto& arr = j.at("embedding");
      Eigen::VectorXd v(arr.size());
      for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i];
      if (dimension == 0) dimension = static_cast<int>(v.size());
      cache.emplace(j.at("digest").get<std::string>(), std::move(v));
    }
  }

  void append_cache(const std::string& digest, const std::string& text,
                    const Eigen::VectorXd& v) {
    std::ofstream out(cfg.cache_file, std::ios::app);
    if (!out) throw Error("remote embedding: cannot write cache file " + cfg.cache_file);
    nlohmann::json j{{"provider", provider_id}, {"digest", digest}, {"text", text}};
    j["embedding"] = std::vector<double>(v.data(), v.data() + v.size());
    out << j.dump() << '\n';
  }

  Eigen::VectorXd fetch(const std::string& text) {
    std::lock_guard<std::mutex> net_lock(net_mutex);
    nlohmann::json body{{"model", cfg.model}, {"input", nlohmann::json::array({text})}};
    nlohmann::json resp = client.post_json(cfg.path, body);
    std::lock_guard<std::mutex> lock(mutex);
    ++remote_calls;
    if (!resp.contains("data") || !resp["data"].is_array() || resp["data"].size() != 1) {
      throw ProtocolError("embedding response: expected a 1-element \"data\" array");
    }
    const auto& entry = resp["data"][0];
    if (!entry.contains("embedding") || !entry["embedding"].is_array() ||
        entry["embedding"].empty()) {
      throw ProtocolError("embedding response: entry has no \"embedding\" array");
    }
    const auto& arr = entry["embedding"];
    Eigen::VectorXd v(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_number()) throw ProtocolError("embedding response: non-numeric value");
      v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    }
    if (dimension == 0) dimension = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != dimension) {
      throw ProtocolError("embedding response: dimension " + std::to_string(v.size()) +
                          " does not match established dimension " + std::to_string(dimension));
    }
    return v;
  }
};

RemoteEmbeddingProvider::RemoteEmbeddingProvider(RemoteEmbeddingConfig cfg)
    : impl_(std::make_unique<Impl>(std::move(cfg))) {}

RemoteEmbeddingProvider::~RemoteEmbeddingProvider() = default;

EmbeddingVector RemoteEmbeddingProvider::embed(const std::string& text) const {
  if (text.empty()) throw Error("embed: text must be nonempty");
  const std::string digest = hex_digest(text);
  {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    auto it = impl_->cache.find(digest);
    if (it != impl_->cache.end()) return {it->second, impl_->provider_id};
  }
  Eigen::VectorXd v = impl_->fetch(text);
  std::lock_guard<std::mutex> lock(impl_->mutex);
  auto [it, inserted] = impl_->cache.emplace(digest, std::move(v));
  if (inserted) impl_->append_cache(digest, text, it->second);
  return {it->second, impl_->provider_id};
}

int RemoteEmbeddingProvider::dimension() const {
  std::lock_guard<std::mutex> lock(impl_->mutex);
  if (impl_->dimension == 0) {
    throw Error("remote embedding: dimension unknown until the first embed or a configured "
                "\"dimension\"");
  }
  return impl_->dimension;
}

const std::string& RemoteEmbeddingProvider::provider_id() const { return impl_->provider_id; }

int RemoteEmbeddingProvider::remote_call_count() const {
  std::lock_guard<std::mutex> lock(impl_->mutex);
  return impl_->remote_calls;
}

}  // namespace bilevel
