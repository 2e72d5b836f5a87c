#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "bilevel/embedding.hpp"

namespace bilevel {

struct RemoteEmbeddingConfig {
  std::string endpoint;             // "http://host:port" or ".../base"
  std::string path = "/embeddings"; // POST {model, input: [text]}
  std::string model;
  std::string api_key;
  int dimension = 0;                // 0: adopt the first response's width
  int timeout_ms = 30000;
  double max_requests_per_second = 4.0;
  std::string cache_file;           // mandatory read-through JSONL cache
};

/// Embeddings served over HTTP with a read-through disk cache, so repeated
/// runs are deterministic and hit the network only for unseen text. Thread
/// safe; concurrent embeds of the same new text may both reach the service,
/// but only one result is kept.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit RemoteEmbeddingProvider(RemoteEmbeddingConfig cfg);
  ~RemoteEmbeddingProvider() override;

  EmbeddingVector embed(const std::string& text) const override;
  int dimension() const override;
  const std::string& provider_id() const override;

  /// Number of HTTP calls actually made (diagnostics; cache hits excluded).
  int remote_call_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bilevel
