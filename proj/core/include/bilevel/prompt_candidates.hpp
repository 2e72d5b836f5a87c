#pragma once

#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <span>
#include <string>
#include <vector>

#include "bilevel/embedding.hpp"

namespace bilevel {

struct PromptCandidate {
  int id = -1;
  std::string text;
  EmbeddingVector embedding;  // filled by the loader
};

/// A task's fixed prompt menu. Candidate ids are dense 0..K-1 and the file
/// order is the id order.
struct CandidateSet {
  std::string task;
  std::vector<PromptCandidate> candidates;
};

/// Parses {"task": ..., "candidates": [{"id": ..., "text": ...}, ...]} and
/// embeds every candidate text with `provider`. Throws ConfigError on missing
/// files, duplicate/gapped ids, or empty texts.
CandidateSet load_candidate_set(const std::filesystem::path& file,
                                const EmbeddingProvider& provider);
CandidateSet parse_candidate_set(const nlohmann::json& j, const EmbeddingProvider& provider);

/// Writes a candidate set file in the shape load_candidate_set reads.
void save_candidate_set(const std::filesystem::path& file, const std::string& task,
                        std::span<const std::string> texts);

}  // namespace bilevel
