#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>

#include "bilevel/environment.hpp"
#include "bilevel/prompt_candidates.hpp"

namespace bilevel {

enum class ThoughtSource { cache, template_rule, remote };

/// One chain-of-thought produced for a (key, prompt) pair. `key` is the
/// situation id by default, or the full observation text when a run is
/// configured to key thoughts on observations instead.
struct Thought {
  std::string text;
  int token_count = 0;  // whitespace-delimited tokens after truncation
  ThoughtSource source = ThoughtSource::cache;
  std::string key;
  int prompt_id = -1;
};

/// Append-only JSONL store of thoughts keyed by (key, prompt_id). Entries are
/// immutable once written: inserting an existing key returns the stored entry
/// unchanged. Reads after writes see the write. Thread safe.
class CotCache {
 public:
  /// Binds to `file`, loading existing entries; the file is created on the
  /// first insert. An empty path keeps the cache purely in memory.
  explicit CotCache(std::filesystem::path file);
  static CotCache in_memory() { return CotCache(std::filesystem::path{}); }

  std::optional<Thought> lookup(const std::string& key, int prompt_id) const;
  Thought insert(const std::string& key, int prompt_id, const std::string& text,
                 ThoughtSource origin, const nlohmann::json* provenance = nullptr);

  std::size_t size() const;
  const std::filesystem::path& file() const { return file_; }

 private:
  std::filesystem::path file_;
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, int>, Thought> entries_;
};

struct ReasonerOptions {
  int max_thought_tokens = 256;
  bool key_on_observation = false;  // ablation: key thoughts by full obs text
  int menu_size = 0;  // candidate-menu size; rule tables that depend on it need it set
};

/// Produces the thought conditioning the action policy at each step.
class Reasoner {
 public:
  virtual ~Reasoner() = default;
  virtual Thought reason(const Observation& obs, const PromptCandidate& prompt) = 0;
  virtual std::string backend_id() const = 0;
};

/// Serves thoughts from a prefilled cache only; a miss is an error. This is
/// the deterministic training backend: fill the cache up front, then train
/// with zero remote traffic.
class CacheReasoner final : public Reasoner {
 public:
  CacheReasoner(std::shared_ptr<CotCache> cache, ReasonerOptions options = {});
  Thought reason(const Observation& obs, const PromptCandidate& prompt) override;
  std::string backend_id() const override;

 private:
  std::shared_ptr<CotCache> cache_;
  ReasonerOptions options_;
};

/// Deterministic per-environment rule table mapping (situation, prompt) to a
/// fixed thought text. Stands in for a language model where the experiment
/// only needs consistent, situation-dependent guidance. Optionally writes
/// through to a cache so the table can be exported.
class TemplateReasoner final : public Reasoner {
 public:
  TemplateReasoner(std::string env_id, ReasonerOptions options = {},
                   std::shared_ptr<CotCache> write_through = nullptr);
  Thought reason(const Observation& obs, const PromptCandidate& prompt) override;
  std::string backend_id() const override;

 private:
  std::string env_id_;
  ReasonerOptions options_;
  std::shared_ptr<CotCache> cache_;
};

/// The rule table behind TemplateReasoner, exposed for cache prefill and
/// tests. Throws ConfigError for unknown environment families.
std::string template_thought(const std::string& env_id, const std::string& situation,
                             int prompt_id, int num_prompts);

struct RemoteReasonerConfig {
  std::string endpoint;                  // "http://host:port" or ".../base"
  std::string path = "/chat/completions";
  std::string model;
  std::string api_key;
  double temperature = 0.0;              // deterministic decoding
  int max_completion_tokens = 512;
  int timeout_ms = 60000;
};

/// Chain-of-thought from a chat-completions service, write-through cached so
/// each (key, prompt) pair is requested at most once per cache lifetime.
class RemoteReasoner final : public Reasoner {
 public:
  RemoteReasoner(RemoteReasonerConfig cfg, std::string task_description,
                 std::shared_ptr<CotCache> cache, ReasonerOptions options = {});
  ~RemoteReasoner() override;

  Thought reason(const Observation& obs, const PromptCandidate& prompt) override;
  std::string backend_id() const override;

  /// HTTP calls actually made (cache hits excluded).
  int remote_call_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Read-through JSONL store of raw chat completions keyed by request digest.
/// Lets candidate generation replay byte-identically with zero remote calls.
class CompletionCache {
 public:
  explicit CompletionCache(std::filesystem::path file);
  std::optional<std::string> lookup(const std::string& digest) const;
  void insert(const std::string& digest, const std::string& request,
              const std::string& completion);

 private:
  std::filesystem::path file_;
  mutable std::mutex mutex_;
  std::map<std::string, std::string> entries_;
};

/// Asks the chat service for `k` candidate prompts for a task and parses the
/// numbered list it returns ("Prompt 1: ..." / "1. ..." lines). Throws
/// ProtocolError (with the raw completion attached) when fewer than `k`
/// lines parse. `cache` may be null to skip caching.
CandidateSet generate_candidates(const RemoteReasonerConfig& cfg,
                                 const std::string& task_description,
                                 const std::string& situation_description, int k,
                                 CompletionCache* cache);

/// Parses the numbered-list completion format used by generate_candidates.
std::vector<std::string> parse_prompt_list(const std::string& completion, int k);

}  // namespace bilevel
