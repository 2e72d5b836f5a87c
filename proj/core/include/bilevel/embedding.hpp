#pragma once

#include <Eigen/Core>
#include <memory>
#include <span>
#include <string>

#include "bilevel/environment.hpp"

namespace bilevel {

struct EmbeddingVector {
  Eigen::VectorXd values;
  std::string provider_id;
};

/// Maps text to fixed-dimension vectors. `embed` must be pure: equal text in,
/// equal vector out, no observable side effects beyond caching.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  /// Embeds nonempty text. Throws Error on empty input.
  virtual EmbeddingVector embed(const std::string& text) const = 0;

  virtual int dimension() const = 0;
  virtual const std::string& provider_id() const = 0;
};

/// Deterministic local provider: tokens are feature-hashed into `dim` buckets
/// and the count vector is scaled to unit Euclidean norm. Order-insensitive
/// by construction, so texts that must be distinguishable need distinguishing
/// tokens, not just different word order.
class HashEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashEmbeddingProvider(int dim = 256);

  EmbeddingVector embed(const std::string& text) const override;
  int dimension() const override { return dim_; }
  const std::string& provider_id() const override { return provider_id_; }

 private:
  int dim_;
  std::string provider_id_;
};

/// The text embed_history embeds: the last min(window + 1, available)
/// observation texts, oldest first, joined by newlines.
std::string history_text(std::span<const Observation> observations, int window);

/// Embeds history_text(observations, window). window = 0 embeds exactly the
/// latest text.
EmbeddingVector embed_history(const EmbeddingProvider& provider,
                              std::span<const Observation> observations, int window);

}  // namespace bilevel
