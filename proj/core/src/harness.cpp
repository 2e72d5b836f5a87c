#include "bilevel/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include "bilevel/errors.hpp"
#include "bilevel/remote_embedding.hpp"

#ifndef BILEVEL_VERSION
#define BILEVEL_VERSION "0.0.0"
#endif

namespace bilevel {

namespace {

std::string format_g10(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", value);
  return buf;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("short write to " + path.string());
}

nlohmann::json* find_path(nlohmann::json& root, const std::string& dotted, bool create) {
  nlohmann::json* node = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ConfigError("override has an empty path segment: " + dotted);
    if (dot == std::string::npos) {
      if (!create && (!node->is_object() || !node->contains(key))) return nullptr;
      return &(*node)[key];
    }
    if (!node->is_object() && !node->is_null()) {
      throw ConfigError("override path crosses a non-object value: " + dotted);
    }
    if (!node->contains(key)) {
      if (!create) return nullptr;
      (*node)[key] = nlohmann::json::object();
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

/// Sets config at `dotted` to `value` only if currently absent or empty.
void fill_if_unset(nlohmann::json& config, const std::string& dotted, const std::string& value) {
  nlohmann::json* node = find_path(config, dotted, true);
  if (node->is_null() || (node->is_string() && node->get<std::string>().empty())) {
    *node = value;
  }
}

struct RunData {
  std::string env;
  std::string method;
  nlohmann::json summary;
  // per seed: episode-ordered series
  std::map<std::uint64_t, std::vector<double>> norm_series;
  std::map<std::uint64_t, std::vector<double>> entropy_series;
};

RunData load_run_dir(const std::filesystem::path& dir) {
  RunData data;
  data.summary = load_config_file(dir / "summary.json");
  data.env = data.summary.at("env").get<std::string>();
  data.method = data.summary.at("method").get<std::string>();

  std::ifstream in(dir / "metrics.csv");
  if (!in) throw ConfigError("cannot read " + (dir / "metrics.csv").string());
  std::string line;
  if (!std::getline(in, line)) throw Error("empty metrics file in " + dir.string());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    // episode,seed,raw_reward,norm_reward,mean_entropy,...
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 5) throw Error("malformed metrics row in " + dir.string() + ": " + line);
    const auto seed = static_cast<std::uint64_t>(std::stoull(fields[1]));
    data.norm_series[seed].push_back(std::atof(fields[3].c_str()));
    data.entropy_series[seed].push_back(std::atof(fields[4].c_str()));
  }
  return data;
}

void mean_stderr(const std::vector<double>& xs, double& mean, double& se) {
  mean = 0.0;
  se = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  se = std::sqrt(ss / static_cast<double>(xs.size() - 1)) /
       std::sqrt(static_cast<double>(xs.size()));
}

}  // namespace

nlohmann::json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

void apply_dotted_override(nlohmann::json& config, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like path.to.key=value, got: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json* node = find_path(config, path, true);
  const nlohmann::json parsed = nlohmann::json::parse(raw, nullptr, false);
  *node = parsed.is_discarded() ? nlohmann::json(raw) : parsed;
}

nlohmann::json resolve_config(nlohmann::json file_config,
                              const std::vector<std::string>& overrides,
                              const EnvGetter& getenv_fn) {
  for (const auto& o : overrides) apply_dotted_override(file_config, o);
  const auto inject = [&](const char* var, const std::string& dotted) {
    if (const char* v = getenv_fn(var); v && *v) fill_if_unset(file_config, dotted, v);
  };
  inject("LLM_ENDPOINT", "reasoner.remote.endpoint");
  inject("LLM_API_KEY", "reasoner.remote.api_key");
  inject("EMBED_ENDPOINT", "embedding.remote.endpoint");
  inject("EMBED_API_KEY", "embedding.remote.api_key");
  return file_config;
}

std::filesystem::path prepare_run_directory(const std::filesystem::path& out,
                                            const std::string& name) {
  if (name.empty()) throw ConfigError("run name must be nonempty");
  std::filesystem::create_directories(out);
  for (int i = 1; i < 10000; ++i) {
    const std::string candidate = i == 1 ? name : name + "-" + std::to_string(i);
    const std::filesystem::path dir = out / candidate;
    if (!std::filesystem::exists(dir)) {
      std::filesystem::create_directories(dir);
      return dir;
    }
  }
  throw Error("could not find a free run directory under " + out.string());
}

std::shared_ptr<const EmbeddingProvider> make_embedding_provider(const nlohmann::json& resolved) {
  const nlohmann::json embedding =
      resolved.contains("embedding") ? resolved["embedding"] : nlohmann::json::object();
  const std::string provider = embedding.value("provider", std::string{"hash"});
  if (provider == "hash") {
    return std::make_shared<HashEmbeddingProvider>(embedding.value("dim", 256));
  }
  if (provider == "remote") {
    if (!embedding.contains("remote")) {
      throw ConfigError("embedding.provider=remote requires an embedding.remote section");
    }
    const auto& r = embedding["remote"];
    RemoteEmbeddingConfig cfg;
    cfg.endpoint = r.value("endpoint", std::string{});
    cfg.path = r.value("path", cfg.path);
    cfg.model = r.value("model", std::string{});
    cfg.api_key = r.value("api_key", std::string{});
    cfg.dimension = r.value("dimension", cfg.dimension);
    cfg.timeout_ms = r.value("timeout_ms", cfg.timeout_ms);
    cfg.max_requests_per_second = r.value("max_rps", cfg.max_requests_per_second);
    cfg.cache_file = r.value("cache_file", std::string{});
    return std::make_shared<RemoteEmbeddingProvider>(std::move(cfg));
  }
  throw ConfigError("unknown embedding provider '" + provider + "' (expected hash|remote)");
}

std::vector<std::uint64_t> config_seeds(const nlohmann::json& resolved) {
  if (!resolved.contains("seeds")) return {1};
  std::vector<std::uint64_t> seeds;
  for (const auto& s : resolved.at("seeds")) seeds.push_back(s.get<std::uint64_t>());
  if (seeds.empty()) throw ConfigError("config: seeds list must be nonempty");
  return seeds;
}

nlohmann::json make_manifest(const nlohmann::json& resolved,
                             const std::vector<std::uint64_t>& seeds,
                             const std::string& embedding_id, const std::string& reasoner_id,
                             const std::filesystem::path& run_dir) {
  nlohmann::json masked = resolved;
  for (const char* section : {"reasoner", "embedding"}) {
    if (masked.contains(section) && masked[section].contains("remote") &&
        masked[section]["remote"].contains("api_key") &&
        !masked[section]["remote"]["api_key"].get<std::string>().empty()) {
      masked[section]["remote"]["api_key"] = "***";
    }
  }
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));

  nlohmann::json m;
  m["code_version"] = BILEVEL_VERSION;
  m["created_utc"] = stamp;
  m["config"] = std::move(masked);
  m["seeds"] = seeds;
  m["backends"] = {{"embedding", embedding_id}, {"reasoner", reasoner_id}};
  m["run_dir"] = run_dir.string();
  return m;
}

TrainOutcome run_train(const nlohmann::json& resolved, const std::filesystem::path& run_dir) {
  TrainerConfig cfg = TrainerConfig::from_json(resolved);
  const auto provider = make_embedding_provider(resolved);
  const std::vector<std::uint64_t> seeds = config_seeds(resolved);

  BilevelTrainer trainer(cfg, provider);
  std::filesystem::create_directories(run_dir / "checkpoints");

  // Reasoner identity for the manifest; the trainer owns the live instance.
  std::string reasoner_id = "none";
  if (cfg.use_thought) {
    reasoner_id = to_string(cfg.reasoner) +
                  (cfg.cot_cache_file.empty() ? "" : ":" + cfg.cot_cache_file);
  }
  const nlohmann::json manifest =
      make_manifest(resolved, seeds, provider->provider_id(), reasoner_id, run_dir);
  write_text_file(run_dir / "manifest.json", manifest.dump(2) + "\n");
  write_text_file(run_dir / "config.json", resolved.dump(2) + "\n");

  std::vector<SeedResult> results;
  std::vector<EpisodeMetrics> all_episodes;
  for (const auto seed : seeds) {
    std::ofstream trace_file;
    if (cfg.trace) {
      trace_file.open(run_dir / ("trace_seed_" + std::to_string(seed) + ".jsonl"),
                      std::ios::binary);
      trainer.set_trace_sink(&trace_file);
    }
    SeedResult result;
    try {
      result = trainer.train(seed);
    } catch (...) {
      // Keep the last checkpoint that preceded the failure, then re-raise.
      if (!trainer.last_good_checkpoint().is_null()) {
        write_text_file(run_dir / "checkpoints" /
                            ("last_good_seed_" + std::to_string(seed) + ".json"),
                        trainer.last_good_checkpoint().dump() + "\n");
      }
      trainer.set_trace_sink(nullptr);
      throw;
    }
    trainer.set_trace_sink(nullptr);
    write_text_file(run_dir / "checkpoints" / ("seed_" + std::to_string(seed) + ".json"),
                    result.final_checkpoint.dump() + "\n");
    all_episodes.insert(all_episodes.end(), result.episodes.begin(), result.episodes.end());
    results.push_back(std::move(result));
  }

  const std::string selector_label = cfg.use_thought ? to_string(cfg.selector) : "none";
  const std::string objective_label = cfg.use_thought ? to_string(cfg.objective) : "none";
  std::ostringstream csv;
  write_metrics_csv(csv, all_episodes, selector_label, objective_label);
  write_text_file(run_dir / "metrics.csv", csv.str());

  TrainOutcome outcome;
  outcome.run_dir = run_dir;
  outcome.summary = summary_json(cfg, results);
  write_text_file(run_dir / "summary.json", outcome.summary.dump(2) + "\n");
  return outcome;
}

nlohmann::json run_eval(const nlohmann::json& resolved,
                        const std::filesystem::path& checkpoint_file, int episodes,
                        std::uint64_t seed, bool greedy, const std::filesystem::path& out_dir) {
  TrainerConfig cfg = TrainerConfig::from_json(resolved);
  const auto provider = make_embedding_provider(resolved);
  BilevelTrainer trainer(cfg, provider);
  trainer.load_checkpoint(load_config_file(checkpoint_file));

  const std::vector<EpisodeMetrics> metrics = trainer.evaluate(episodes, seed, greedy);
  std::filesystem::create_directories(out_dir);

  const std::string selector_label = cfg.use_thought ? to_string(cfg.selector) : "none";
  const std::string objective_label = cfg.use_thought ? to_string(cfg.objective) : "none";
  std::ostringstream csv;
  write_metrics_csv(csv, metrics, selector_label, objective_label);
  write_text_file(out_dir / "eval_metrics.csv", csv.str());

  std::vector<double> norms;
  std::vector<double> raws;
  for (const auto& m : metrics) {
    norms.push_back(m.norm_reward);
    raws.push_back(m.raw_reward);
  }
  double raw_mean = 0.0;
  for (double r : raws) raw_mean += r;
  raw_mean /= static_cast<double>(raws.size());

  nlohmann::json summary;
  summary["env"] = cfg.env.at("id").get<std::string>();
  summary["method"] = cfg.method_label();
  summary["episodes"] = episodes;
  summary["seed"] = seed;
  summary["greedy"] = greedy;
  summary["auc"] = auc_mean(norms);
  summary["raw_reward_mean"] = raw_mean;
  write_text_file(out_dir / "eval_summary.json", summary.dump(2) + "\n");
  return summary;
}

CachePrefillReport run_cache_cot(const nlohmann::json& resolved) {
  TrainerConfig cfg = TrainerConfig::from_json(resolved);
  if (!cfg.use_thought) throw ConfigError("cache-cot: config disables thoughts");
  if (cfg.reasoner == ReasonerBackend::cache) {
    throw ConfigError("cache-cot needs a template or remote reasoner to fill the cache");
  }
  if (cfg.cot_cache_file.empty()) {
    throw ConfigError("cache-cot: reasoner.cache_file must name the cache to fill");
  }

  const auto provider = make_embedding_provider(resolved);
  const auto env = make_environment(cfg.env);
  const CandidateSet candidates = load_candidate_set(cfg.candidate_file, *provider);
  auto cache = std::make_shared<CotCache>(cfg.cot_cache_file);

  ReasonerOptions options = cfg.reasoner_options;
  options.menu_size = static_cast<int>(candidates.candidates.size());
  std::unique_ptr<Reasoner> reasoner;
  if (cfg.reasoner == ReasonerBackend::template_rule) {
    reasoner = std::make_unique<TemplateReasoner>(env->id(), options, cache);
  } else {
    reasoner = std::make_unique<RemoteReasoner>(cfg.remote_reasoner, env->task_description(),
                                                cache, options);
  }

  CachePrefillReport report;
  for (const auto& situation : env->enumerate_situations()) {
    for (const auto& candidate : candidates.candidates) {
      report.pairs_total += 1;
      if (cache->lookup(situation, candidate.id)) {
        report.already_cached += 1;
        continue;
      }
      try {
        // The prefill pass has no live state, so the situation key doubles as
        // the observation text sent to remote backends.
        const Observation obs{situation, std::nullopt, situation};
        reasoner->reason(obs, candidate);
        report.written += 1;
      } catch (const std::exception& e) {
        report.failures.push_back(situation + "/" + std::to_string(candidate.id) + ": " +
                                  e.what());
      }
    }
  }
  return report;
}

void write_report(const std::vector<std::filesystem::path>& run_dirs,
                  const std::filesystem::path& out_dir) {
  if (run_dirs.empty()) throw ConfigError("report: no run directories given");
  std::vector<RunData> runs;
  for (const auto& dir : run_dirs) runs.push_back(load_run_dir(dir));
  for (const auto& r : runs) {
    if (r.env != runs.front().env) {
      throw ConfigError("report: runs mix environments '" + runs.front().env + "' and '" +
                        r.env + "'");
    }
  }
  std::filesystem::create_directories(out_dir);

  // Group runs by method; one curve file per method, one AUC bar per method.
  std::map<std::string, std::vector<const RunData*>> by_method;
  for (const auto& r : runs) by_method[r.method].push_back(&r);

  std::ostringstream bars;
  bars << "method,auc_mean,auc_stderr,seeds\n";
  for (const auto& [method, group] : by_method) {
    // Gather per-seed series across every run of this method.
    std::vector<const std::vector<double>*> norm_series;
    std::vector<const std::vector<double>*> entropy_series;
    std::vector<double> aucs;
    for (const RunData* run : group) {
      for (const auto& [seed, series] : run->norm_series) {
        norm_series.push_back(&series);
        entropy_series.push_back(&run->entropy_series.at(seed));
      }
      for (const auto& s : run->summary.at("seeds")) aucs.push_back(s.at("auc").get<double>());
    }
    std::size_t length = norm_series.empty() ? 0 : norm_series.front()->size();
    for (const auto* s : norm_series) length = std::min(length, s->size());

    std::ostringstream curve;
    curve << "episode,norm_reward_mean,norm_reward_stderr,entropy_mean,entropy_stderr,"
             "series_count\n";
    for (std::size_t i = 0; i < length; ++i) {
      std::vector<double> norm_at, ent_at;
      for (std::size_t s = 0; s < norm_series.size(); ++s) {
        norm_at.push_back((*norm_series[s])[i]);
        ent_at.push_back((*entropy_series[s])[i]);
      }
      double nm = 0.0, nse = 0.0, em = 0.0, ese = 0.0;
      mean_stderr(norm_at, nm, nse);
      mean_stderr(ent_at, em, ese);
      curve << i << ',' << format_g10(nm) << ',' << format_g10(nse) << ',' << format_g10(em)
            << ',' << format_g10(ese) << ',' << norm_series.size() << '\n';
    }
    write_text_file(out_dir / ("curve_" + method + ".csv"), curve.str());

    double auc_m = 0.0, auc_se = 0.0;
    mean_stderr(aucs, auc_m, auc_se);
    bars << method << ',' << format_g10(auc_m) << ',' << format_g10(auc_se) << ',' << aucs.size()
         << '\n';
  }
  write_text_file(out_dir / "auc_bars.csv", bars.str());
}

}  // namespace bilevel
