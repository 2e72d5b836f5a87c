#pragma once

#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "bilevel/embedding.hpp"
#include "bilevel/trainer.hpp"

namespace bilevel {

/// Reads and parses a JSON config; errors name the offending path.
nlohmann::json load_config_file(const std::filesystem::path& path);

/// Applies one "a.b.c=value" override in place. The value is parsed as JSON
/// when possible, else taken as a string; intermediate objects are created.
void apply_dotted_override(nlohmann::json& config, const std::string& assignment);

/// Getter for environment variables; injectable so resolution stays testable.
using EnvGetter = std::function<const char*(const char*)>;

/// Pure config resolution: file contents + dotted overrides + environment
/// secrets (LLM_ENDPOINT, LLM_API_KEY, EMBED_ENDPOINT, EMBED_API_KEY fill
/// reasoner.remote.* / embedding.remote.* only when unset).
nlohmann::json resolve_config(nlohmann::json file_config,
                              const std::vector<std::string>& overrides,
                              const EnvGetter& getenv_fn);

/// Creates <out>/<name>, suffixing -2, -3, ... if taken. Returns the path.
std::filesystem::path prepare_run_directory(const std::filesystem::path& out,
                                            const std::string& name);

/// Builds the embedding provider the config asks for ("hash" default, or
/// "remote" with its endpoint section).
std::shared_ptr<const EmbeddingProvider> make_embedding_provider(const nlohmann::json& resolved);

/// Run manifest: resolved config (secrets masked), seeds, code version,
/// backend identities, timestamp, output paths.
nlohmann::json make_manifest(const nlohmann::json& resolved, const std::vector<std::uint64_t>& seeds,
                             const std::string& embedding_id, const std::string& reasoner_id,
                             const std::filesystem::path& run_dir);

/// Seeds from the resolved config ("seeds" array), or {1} if absent.
std::vector<std::uint64_t> config_seeds(const nlohmann::json& resolved);

struct TrainOutcome {
  std::filesystem::path run_dir;
  nlohmann::json summary;
};

/// Full training entry point: writes manifest + resolved config up front,
/// trains every seed, and emits metrics.csv, summary.json, and per-seed
/// checkpoints into `run_dir`. On an aborted run the last good checkpoint is
/// preserved before the error propagates.
TrainOutcome run_train(const nlohmann::json& resolved, const std::filesystem::path& run_dir);

/// Frozen-policy evaluation of a saved checkpoint; writes eval_metrics.csv
/// and eval_summary.json into `out_dir`.
nlohmann::json run_eval(const nlohmann::json& resolved,
                        const std::filesystem::path& checkpoint_file, int episodes,
                        std::uint64_t seed, bool greedy, const std::filesystem::path& out_dir);

struct CachePrefillReport {
  int pairs_total = 0;
  int already_cached = 0;
  int written = 0;
  std::vector<std::string> failures;  // "situation/prompt: error"
};

/// Fills the thought cache for every (situation, prompt) pair of the
/// configured environment. Failures are collected per pair; progress made
/// before a failure stays on disk.
CachePrefillReport run_cache_cot(const nlohmann::json& resolved);

/// Emits per-method training curves (mean/stderr over seeds) and AUC bars as
/// CSV plot data. All run directories must share one environment.
void write_report(const std::vector<std::filesystem::path>& run_dirs,
                  const std::filesystem::path& out_dir);

}  // namespace bilevel
