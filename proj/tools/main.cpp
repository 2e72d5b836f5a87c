// Command-line front end: train / eval / report / cache-cot / gen-prompts.
// Configuration is hierarchical JSON; --set applies dotted-path overrides and
// the convenience flags (--selector, --env, ...) are sugar for the same.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bilevel/cot.hpp"
#include "bilevel/errors.hpp"
#include "bilevel/harness.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;       // --set a.b.c=value
  std::vector<std::uint64_t> seeds;         // --seed, repeatable
  std::string selector, objective, reasoner, env, out{"runs"}, name;
  int workers = 0;
  bool trace = false;
};

void add_common_options(CLI::App* cmd, CommonArgs& args, bool wants_run_shaping) {
  cmd->add_option("--config", args.config_path, "JSON config file")->required();
  cmd->add_option("--set", args.overrides, "dotted override, e.g. training.episodes=500");
  if (wants_run_shaping) {
    cmd->add_option("--seed", args.seeds, "run seed (repeatable; replaces the config's list)");
    cmd->add_option("--selector", args.selector, "prompt selector: learned|random|ucb");
    cmd->add_option("--objective", args.objective, "outer objective: neg_entropy|env_reward");
    cmd->add_option("--reasoner", args.reasoner, "thought backend: cache|template|remote");
    cmd->add_option("--env", args.env, "environment id override");
    cmd->add_option("--out", args.out, "output root directory");
    cmd->add_option("--name", args.name, "run directory name (default: config name/method)");
    cmd->add_option("--workers", args.workers, "parallel rollout workers");
    cmd->add_flag("--trace", args.trace, "emit per-step JSONL traces (workers=1)");
  }
}

nlohmann::json resolve_from_args(const CommonArgs& args) {
  std::vector<std::string> overrides = args.overrides;
  if (!args.selector.empty()) overrides.push_back("prompt_policy.selector=" + args.selector);
  if (!args.objective.empty()) overrides.push_back("prompt_policy.objective=" + args.objective);
  if (!args.reasoner.empty()) overrides.push_back("reasoner.backend=" + args.reasoner);
  if (!args.env.empty()) overrides.push_back("env.id=" + args.env);
  if (args.workers > 0) overrides.push_back("training.workers=" + std::to_string(args.workers));
  if (args.trace) overrides.push_back("training.trace=true");

  nlohmann::json resolved = bilevel::resolve_config(
      bilevel::load_config_file(args.config_path), overrides,
      [](const char* var) { return std::getenv(var); });
  if (!args.seeds.empty()) resolved["seeds"] = args.seeds;
  return resolved;
}

std::string run_name(const CommonArgs& args, const nlohmann::json& resolved) {
  if (!args.name.empty()) return args.name;
  if (resolved.contains("name")) return resolved["name"].get<std::string>();
  const auto cfg = bilevel::TrainerConfig::from_json(resolved);
  return cfg.env.at("id").get<std::string>() + "-" + cfg.method_label();
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw bilevel::ConfigError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_train(const CommonArgs& args) {
  const nlohmann::json resolved = resolve_from_args(args);
  const auto run_dir = bilevel::prepare_run_directory(args.out, run_name(args, resolved));
  const auto outcome = bilevel::run_train(resolved, run_dir);
  nlohmann::json line;
  line["run_dir"] = outcome.run_dir.string();
  line["auc_mean"] = outcome.summary.at("auc_mean");
  line["method"] = outcome.summary.at("method");
  std::cout << line.dump() << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint, int episodes,
             std::uint64_t eval_seed, bool greedy) {
  const nlohmann::json resolved = resolve_from_args(args);
  const std::string name = args.name.empty() ? "eval" : args.name;
  const auto out_dir = bilevel::prepare_run_directory(args.out, name);
  const auto summary =
      bilevel::run_eval(resolved, checkpoint, episodes, eval_seed, greedy, out_dir);
  nlohmann::json line = summary;
  line["out_dir"] = out_dir.string();
  std::cout << line.dump() << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& out) {
  std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
  bilevel::write_report(paths, out);
  nlohmann::json line;
  line["out_dir"] = out;
  line["runs"] = dirs.size();
  std::cout << line.dump() << "\n";
  return 0;
}

int cmd_cache_cot(const CommonArgs& args) {
  const nlohmann::json resolved = resolve_from_args(args);
  const auto report = bilevel::run_cache_cot(resolved);
  nlohmann::json line;
  line["pairs_total"] = report.pairs_total;
  line["already_cached"] = report.already_cached;
  line["written"] = report.written;
  line["failures"] = report.failures;
  std::cout << line.dump() << "\n";
  return report.failures.empty() ? 0 : 3;
}

int cmd_gen_prompts(const CommonArgs& args, const std::string& task_file,
                    const std::string& situation_file, int k, const std::string& out_file,
                    const std::string& completion_cache) {
  const nlohmann::json resolved = resolve_from_args(args);

  bilevel::RemoteReasonerConfig rcfg;
  if (resolved.contains("reasoner") && resolved["reasoner"].contains("remote")) {
    const auto& rr = resolved["reasoner"]["remote"];
    rcfg.endpoint = rr.value("endpoint", std::string{});
    rcfg.path = rr.value("path", rcfg.path);
    rcfg.model = rr.value("model", std::string{});
    rcfg.api_key = rr.value("api_key", std::string{});
    rcfg.temperature = rr.value("temperature", rcfg.temperature);
    rcfg.max_completion_tokens = rr.value("max_completion_tokens", rcfg.max_completion_tokens);
    rcfg.timeout_ms = rr.value("timeout_ms", rcfg.timeout_ms);
  }
  if (rcfg.endpoint.empty()) {
    throw bilevel::ConfigError(
        "gen-prompts needs reasoner.remote.endpoint (or LLM_ENDPOINT) configured");
  }

  const auto env = bilevel::make_environment(resolved.at("env"));
  const std::string task =
      task_file.empty() ? env->task_description() : read_text_file(task_file);
  std::string situation;
  if (!situation_file.empty()) {
    situation = read_text_file(situation_file);
  } else {
    for (const auto& s : env->enumerate_situations()) {
      if (!situation.empty()) situation += ", ";
      situation += s;
    }
    situation = "Possible situations: " + situation + ".";
  }

  std::optional<bilevel::CompletionCache> cache;
  if (!completion_cache.empty()) cache.emplace(completion_cache);
  const auto set = bilevel::generate_candidates(rcfg, task, situation, k,
                                                cache ? &*cache : nullptr);
  std::vector<std::string> texts;
  for (const auto& c : set.candidates) texts.push_back(c.text);
  bilevel::save_candidate_set(out_file, set.task, texts);

  nlohmann::json line;
  line["candidate_file"] = out_file;
  line["candidates"] = texts.size();
  std::cout << line.dump() << "\n";
  return 0;
}

int report_error(const char* kind, const std::exception& e, int code) {
  nlohmann::json record;
  record["error"] = kind;
  record["message"] = e.what();
  std::cerr << record.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bilevel prompt/action policy training harness"};
  app.require_subcommand(1);

  CommonArgs train_args;
  auto* train = app.add_subcommand("train", "train policies per the config");
  add_common_options(train, train_args, true);

  CommonArgs eval_args;
  std::string eval_checkpoint;
  int eval_episodes = 100;
  std::uint64_t eval_seed = 1;
  bool eval_greedy = false;
  auto* eval = app.add_subcommand("eval", "run a frozen checkpoint");
  add_common_options(eval, eval_args, true);
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint JSON file")->required();
  eval->add_option("--episodes", eval_episodes, "evaluation episodes");
  eval->add_option("--eval-seed", eval_seed, "seed for evaluation episodes");
  eval->add_flag("--greedy", eval_greedy, "argmax actions instead of sampling");

  std::vector<std::string> report_dirs;
  std::string report_out{"report"};
  auto* report = app.add_subcommand("report", "aggregate run directories into plot data");
  report->add_option("dirs", report_dirs, "run directories")->required()->expected(-1);
  report->add_option("--out", report_out, "report output directory");

  CommonArgs cache_args;
  auto* cache = app.add_subcommand("cache-cot", "prefill the thought cache");
  add_common_options(cache, cache_args, true);

  CommonArgs gen_args;
  std::string gen_task_file, gen_situation_file, gen_out{"candidates.json"}, gen_cache;
  int gen_k = 3;
  auto* gen = app.add_subcommand("gen-prompts", "generate a prompt candidate set");
  add_common_options(gen, gen_args, false);
  gen->add_option("--task-file", gen_task_file, "task description text file");
  gen->add_option("--situation-file", gen_situation_file, "situation description text file");
  gen->add_option("-k,--candidates", gen_k, "number of prompts to request");
  gen->add_option("--out", gen_out, "candidate-set file to write");
  gen->add_option("--completion-cache", gen_cache, "JSONL completion cache file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_args);
    if (eval->parsed()) return cmd_eval(eval_args, eval_checkpoint, eval_episodes, eval_seed,
                                        eval_greedy);
    if (report->parsed()) return cmd_report(report_dirs, report_out);
    if (cache->parsed()) return cmd_cache_cot(cache_args);
    if (gen->parsed()) {
      return cmd_gen_prompts(gen_args, gen_task_file, gen_situation_file, gen_k, gen_out,
                             gen_cache);
    }
  } catch (const bilevel::ConfigError& e) {
    return report_error("config", e, 2);
  } catch (const bilevel::RemoteError& e) {
    return report_error("remote", e, 3);
  } catch (const std::exception& e) {
    return report_error("internal", e, 1);
  }
  return 1;
}
