#include "bilevel/prompt_candidates.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "bilevel/errors.hpp"

namespace bilevel {

CandidateSet parse_candidate_set(const nlohmann::json& j, const EmbeddingProvider& provider) {
  CandidateSet set;
  set.task = j.value("task", "");
  if (!j.contains("candidates") || !j.at("candidates").is_array() || j.at("candidates").empty()) {
    throw ConfigError("candidate set: needs a nonempty \"candidates\" array");
  }
  for (const auto& entry : j.at("candidates")) {
    PromptCandidate c;
    c.id = entry.at("id").get<int>();
    c.text = entry.at("text").get<std::string>();
    if (c.text.empty()) {
      throw ConfigError("candidate set: candidate " + std::to_string(c.id) + " has empty text");
    }
    set.candidates.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < set.candidates.size(); ++i) {
    if (set.candidates[i].id != static_cast<int>(i)) {
      throw ConfigError("candidate set: ids must be dense 0..K-1 in file order; entry " +
                        std::to_string(i) + " has id " + std::to_string(set.candidates[i].id));
    }
  }
  for (auto& c : set.candidates) {
    c.embedding = provider.embed(c.text);
  }
  return set;
}

CandidateSet load_candidate_set(const std::filesystem::path& file,
                                const EmbeddingProvider& provider) {
  std::ifstream in(file);
  if (!in) {
    throw ConfigError("candidate set: cannot open file '" + file.string() + "'");
  }
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw ConfigError("candidate set: '" + file.string() + "' is not valid JSON");
  }
  return parse_candidate_set(j, provider);
}

void save_candidate_set(const std::filesystem::path& file, const std::string& task,
                        std::span<const std::string> texts) {
  nlohmann::json j;
  j["task"] = task;
  j["candidates"] = nlohmann::json::array();
  for (std::size_t i = 0; i < texts.size(); ++i) {
    j["candidates"].push_back({{"id", static_cast<int>(i)}, {"text", texts[i]}});
  }
  std::ofstream out(file);
  if (!out) throw Error("candidate set: cannot write file '" + file.string() + "'");
  out << j.dump(2) << '\n';
}

}  // namespace bilevel
