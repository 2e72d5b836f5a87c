#include "bilevel/embedding.hpp"

#include "bilevel/errors.hpp"
#include "bilevel/text.hpp"

namespace bilevel {

HashEmbeddingProvider::HashEmbeddingProvider(int dim) : dim_(dim) {
  if (dim < 1) throw ConfigError("hash embedding: dim must be >= 1");
  provider_id_ = "hash-" + std::to_string(dim);
}

EmbeddingVector HashEmbeddingProvider::embed(const std::string& text) const {
  if (text.empty()) throw Error("embed: text must be nonempty");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
  for (const auto& token : tokenize(text)) {
    v[static_cast<Eigen::Index>(fnv1a64(token) % static_cast<std::uint64_t>(dim_))] += 1.0;
  }
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return {std::move(v), provider_id_};
}

std::string history_text(std::span<const Observation> observations, int window) {
  if (observations.empty()) throw Error("embed_history: no observations");
  if (window < 0) throw Error("embed_history: window must be >= 0");
  const std::size_t take =
      std::min(observations.size(), static_cast<std::size_t>(window) + 1);
  std::string joined;
  for (std::size_t i = observations.size() - take; i < observations.size(); ++i) {
    if (!joined.empty()) joined += '\n';
    joined += observations[i].text;
  }
  return joined;
}

EmbeddingVector embed_history(const EmbeddingProvider& provider,
                              std::span<const Observation> observations, int window) {
  return provider.embed(history_text(observations, window));
}

}  // namespace bilevel
