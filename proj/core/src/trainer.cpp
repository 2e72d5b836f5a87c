#include "bilevel/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <thread>

#include "bilevel/errors.hpp"

namespace bilevel {

namespace {

// derive_seed stream ids; episode-indexed streams get disjoint billion-wide
// bands so they never collide with the scalar streams.
constexpr std::uint64_t kActionInitStream = 11;
constexpr std::uint64_t kPromptInitStream = 12;
constexpr std::uint64_t kPpoShuffleStream = 13;
constexpr std::uint64_t kEvalRootStream = 14;
constexpr std::uint64_t kEnvStreamBase = 1'000'000'000;
constexpr std::uint64_t kPolicyStreamBase = 2'000'000'000;

std::string format_g10(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", value);
  return buf;
}

double stderr_of(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return sd / std::sqrt(static_cast<double>(xs.size()));
}

}  // namespace

SelectorKind selector_from_string(const std::string& s) {
  if (s == "learned") return SelectorKind::learned;
  if (s == "random") return SelectorKind::random_uniform;
  if (s == "ucb") return SelectorKind::ucb;
  throw ConfigError("unknown selector '" + s + "' (expected learned|random|ucb)");
}

ReasonerBackend reasoner_from_string(const std::string& s) {
  if (s == "cache") return ReasonerBackend::cache;
  if (s == "template") return ReasonerBackend::template_rule;
  if (s == "remote") return ReasonerBackend::remote;
  throw ConfigError("unknown reasoner backend '" + s + "' (expected cache|template|remote)");
}

InputMode input_mode_from_string(const std::string& s) {
  if (s == "text") return InputMode::text;
  if (s == "symbolic") return InputMode::symbolic;
  if (s == "text_and_symbolic") return InputMode::text_and_symbolic;
  throw ConfigError("unknown input mode '" + s + "' (expected text|symbolic|text_and_symbolic)");
}

PromptObjective objective_from_string(const std::string& s) {
  if (s == "neg_entropy") return PromptObjective::neg_entropy;
  if (s == "env_reward") return PromptObjective::env_reward;
  throw ConfigError("unknown objective '" + s + "' (expected neg_entropy|env_reward)");
}

std::string to_string(SelectorKind k) {
  switch (k) {
    case SelectorKind::learned: return "learned";
    case SelectorKind::random_uniform: return "random";
    case SelectorKind::ucb: return "ucb";
  }
  return "?";
}

std::string to_string(ReasonerBackend b) {
  switch (b) {
    case ReasonerBackend::cache: return "cache";
    case ReasonerBackend::template_rule: return "template";
    case ReasonerBackend::remote: return "remote";
  }
  return "?";
}

std::string to_string(InputMode m) {
  switch (m) {
    case InputMode::text: return "text";
    case InputMode::symbolic: return "symbolic";
    case InputMode::text_and_symbolic: return "text_and_symbolic";
  }
  return "?";
}

std::string to_string(PromptObjective o) {
  return o == PromptObjective::neg_entropy ? "neg_entropy" : "env_reward";
}

TrainerConfig TrainerConfig::from_json(const nlohmann::json& j) {
  TrainerConfig cfg;
  cfg.env = j.at("env");

  if (j.contains("embedding")) {
    cfg.embedding_dim = j["embedding"].value("dim", cfg.embedding_dim);
  }

  if (j.contains("prompts")) {
    cfg.candidate_file = j["prompts"].value("candidate_file", std::string{});
  }

  if (j.contains("prompt_policy")) {
    const auto& p = j["prompt_policy"];
    cfg.selector = selector_from_string(p.value("selector", std::string{"learned"}));
    cfg.objective = objective_from_string(p.value("objective", std::string{"neg_entropy"}));
    cfg.outer_gamma = p.value("gamma", cfg.outer_gamma);
    cfg.outer_learning_rate = p.value("learning_rate", cfg.outer_learning_rate);
    cfg.outer_epochs = p.value("epochs", cfg.outer_epochs);
    cfg.ucb_exploration = p.value("ucb_exploration", cfg.ucb_exploration);
    cfg.history_window = p.value("history_window", cfg.history_window);
    cfg.prompt_policy.proj_dim = p.value("proj_dim", cfg.prompt_policy.proj_dim);
    cfg.prompt_policy.temperature_init =
        p.value("temperature_init", cfg.prompt_policy.temperature_init);
    cfg.prompt_policy.init_scale = p.value("init_scale", cfg.prompt_policy.init_scale);
    cfg.prompt_policy.max_grad_norm =
        p.value("max_grad_norm", cfg.prompt_policy.max_grad_norm);
    if (p.contains("projection_init")) {
      const std::string mode = p.at("projection_init").get<std::string>();
      if (mode == "identity") {
        cfg.prompt_policy.projection_init = ProjectionInit::identity;
      } else if (mode == "shared") {
        cfg.prompt_policy.projection_init = ProjectionInit::shared;
      } else if (mode == "independent") {
        cfg.prompt_policy.projection_init = ProjectionInit::independent;
      } else {
        throw ConfigError("config: unknown projection_init '" + mode + "'");
      }
    }
    cfg.prompt_policy.similarity =
        p.value("similarity", std::string{"dot"}) == "cosine" ? Similarity::cosine
                                                              : Similarity::dot;
    cfg.prompt_policy.mean_baseline = p.value("mean_baseline", cfg.prompt_policy.mean_baseline);
  }

  if (j.contains("reasoner")) {
    const auto& r = j["reasoner"];
    cfg.reasoner = reasoner_from_string(r.value("backend", std::string{"cache"}));
    cfg.cot_cache_file = r.value("cache_file", std::string{});
    cfg.reasoner_options.max_thought_tokens =
        r.value("max_thought_tokens", cfg.reasoner_options.max_thought_tokens);
    cfg.reasoner_options.key_on_observation =
        r.value("key_on_observation", cfg.reasoner_options.key_on_observation);
    if (r.contains("remote")) {
      const auto& rr = r["remote"];
      cfg.remote_reasoner.endpoint = rr.value("endpoint", std::string{});
      cfg.remote_reasoner.path = rr.value("path", cfg.remote_reasoner.path);
      cfg.remote_reasoner.model = rr.value("model", std::string{});
      cfg.remote_reasoner.api_key = rr.value("api_key", std::string{});
      cfg.remote_reasoner.temperature = rr.value("temperature", cfg.remote_reasoner.temperature);
      cfg.remote_reasoner.max_completion_tokens =
          rr.value("max_completion_tokens", cfg.remote_reasoner.max_completion_tokens);
      cfg.remote_reasoner.timeout_ms = rr.value("timeout_ms", cfg.remote_reasoner.timeout_ms);
    }
  }

  if (j.contains("action_policy")) {
    const auto& a = j["action_policy"];
    cfg.use_thought = a.value("use_thought", cfg.use_thought);
    cfg.input_mode = input_mode_from_string(a.value("input_mode", std::string{"text"}));
    cfg.hidden_width = a.value("hidden_width", cfg.hidden_width);
    cfg.eps_floor = a.value("eps_floor", cfg.eps_floor);
    if (a.contains("ppo")) {
      const auto& p = a["ppo"];
      cfg.ppo.gamma = p.value("gamma", cfg.ppo.gamma);
      cfg.ppo.gae_lambda = p.value("gae_lambda", cfg.ppo.gae_lambda);
      cfg.ppo.clip_eps = p.value("clip_eps", cfg.ppo.clip_eps);
      cfg.ppo.epochs = p.value("epochs", cfg.ppo.epochs);
      cfg.ppo.minibatch_size = p.value("minibatch_size", cfg.ppo.minibatch_size);
      cfg.ppo.learning_rate = p.value("learning_rate", cfg.ppo.learning_rate);
      cfg.ppo.value_learning_rate = p.value("value_learning_rate", cfg.ppo.value_learning_rate);
    }
  }

  if (j.contains("training")) {
    const auto& t = j["training"];
    cfg.episodes = t.value("episodes", cfg.episodes);
    cfg.rollout_batch = t.value("rollout_batch", cfg.rollout_batch);
    cfg.workers = t.value("workers", cfg.workers);
    cfg.checkpoint_every = t.value("checkpoint_every", cfg.checkpoint_every);
    cfg.trace = t.value("trace", cfg.trace);
  }

  cfg.validate();
  return cfg;
}

void TrainerConfig::validate() const {
  if (!env.is_object() || !env.contains("id")) {
    throw ConfigError("config: env section with an 'id' field is required");
  }
  if (embedding_dim < 1) throw ConfigError("config: embedding dim must be >= 1");
  if (episodes < 1) throw ConfigError("config: training.episodes must be >= 1");
  if (rollout_batch < 1) throw ConfigError("config: training.rollout_batch must be >= 1");
  if (workers < 1) throw ConfigError("config: training.workers must be >= 1");
  if (trace && workers != 1) {
    throw ConfigError("config: per-step tracing requires training.workers = 1");
  }
  if (outer_gamma < 0.0 || outer_gamma >= 1.0) {
    throw ConfigError("config: prompt_policy.gamma must lie in [0, 1)");
  }
  if (outer_learning_rate < 0.0) {
    throw ConfigError("config: prompt_policy.learning_rate must be >= 0");
  }
  if (outer_epochs < 1) throw ConfigError("config: prompt_policy.epochs must be >= 1");
  if (use_thought && candidate_file.empty()) {
    throw ConfigError("config: prompts.candidate_file is required when thoughts are enabled");
  }
  if (use_thought && reasoner == ReasonerBackend::cache && cot_cache_file.empty()) {
    throw ConfigError("config: reasoner.cache_file is required for the cache backend");
  }
  if (use_thought && reasoner == ReasonerBackend::remote && remote_reasoner.endpoint.empty()) {
    throw ConfigError(
        "config: reasoner.remote.endpoint (or LLM_ENDPOINT) is required for the remote backend");
  }
}

std::string TrainerConfig::method_label() const {
  std::string base;
  if (!use_thought) {
    base = "vanilla-ppo";
  } else {
    switch (selector) {
      case SelectorKind::learned:
        base = objective == PromptObjective::env_reward ? "bilevel-env" : "bilevel";
        break;
      case SelectorKind::random_uniform: base = "bilevel-random"; break;
      case SelectorKind::ucb: base = "bilevel-ucb"; break;
    }
  }
  if (input_mode == InputMode::symbolic) base += "-symbolic";
  if (input_mode == InputMode::text_and_symbolic) base += "-textsym";
  return base;
}

double auc_mean(std::span<const double> normalized_rewards) {
  if (normalized_rewards.empty()) throw Error("auc: empty reward list");
  double sum = 0.0;
  for (double v : normalized_rewards) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error("auc: normalized reward " + std::to_string(v) + " outside [0, 1]");
    }
    sum += v;
  }
  return sum / static_cast<double>(normalized_rewards.size());
}

double normalize_return(double raw, std::pair<double, double> bounds) {
  if (!(bounds.second > bounds.first)) {
    throw Error("normalize_return: bounds must satisfy max > min");
  }
  return std::clamp((raw - bounds.first) / (bounds.second - bounds.first), 0.0, 1.0);
}

double window_mean(std::span<const EpisodeMetrics> episodes, double EpisodeMetrics::*field,
                   int window, bool from_front) {
  if (episodes.empty()) throw Error("window_mean: no episodes");
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(std::max(window, 1)),
                                              episodes.size());
  const std::size_t begin = from_front ? 0 : episodes.size() - w;
  double sum = 0.0;
  for (std::size_t i = begin; i < begin + w; ++i) sum += episodes[i].*field;
  return sum / static_cast<double>(w);
}

void write_metrics_csv(std::ostream& out, std::span<const EpisodeMetrics> episodes,
                       const std::string& selector_label, const std::string& objective_label) {
  out << "episode,seed,raw_reward,norm_reward,mean_entropy,selector,objective\n";
  for (const auto& m : episodes) {
    out << m.episode << ',' << m.seed << ',' << format_g10(m.raw_reward) << ','
        << format_g10(m.norm_reward) << ',' << format_g10(m.mean_entropy) << ','
        << selector_label << ',' << objective_label << '\n';
  }
}

nlohmann::json summary_json(const TrainerConfig& cfg, std::span<const SeedResult> results) {
  nlohmann::json seeds = nlohmann::json::array();
  std::vector<double> aucs;
  for (const auto& r : results) {
    nlohmann::json s;
    s["seed"] = r.seed;
    s["auc"] = r.auc;
    s["episodes"] = r.episodes.size();
    if (!r.episodes.empty()) {
      s["final100_norm_mean"] = window_mean(r.episodes, &EpisodeMetrics::norm_reward, 100, false);
      s["first100_entropy_mean"] =
          window_mean(r.episodes, &EpisodeMetrics::mean_entropy, 100, true);
      s["final100_entropy_mean"] =
          window_mean(r.episodes, &EpisodeMetrics::mean_entropy, 100, false);
    }
    seeds.push_back(std::move(s));
    aucs.push_back(r.auc);
  }
  double auc_total = 0.0;
  for (double a : aucs) auc_total += a;
  nlohmann::json j;
  j["env"] = cfg.env.at("id").get<std::string>();
  j["method"] = cfg.method_label();
  j["selector"] = cfg.use_thought ? to_string(cfg.selector) : std::string{"none"};
  j["objective"] = cfg.use_thought ? to_string(cfg.objective) : std::string{"none"};
  j["episodes_per_seed"] = cfg.episodes;
  j["seeds"] = std::move(seeds);
  j["auc_mean"] = aucs.empty() ? 0.0 : auc_total / static_cast<double>(aucs.size());
  j["auc_stderr"] = stderr_of(aucs);
  return j;
}

BilevelTrainer::BilevelTrainer(TrainerConfig cfg,
                               std::shared_ptr<const EmbeddingProvider> provider)
    : cfg_(std::move(cfg)),
      provider_(provider ? std::move(provider)
                         : std::make_shared<HashEmbeddingProvider>(cfg_.embedding_dim)) {
  cfg_.validate();
  for (int w = 0; w < cfg_.workers; ++w) worker_envs_.push_back(make_environment(cfg_.env));
  worker_embed_memo_.resize(static_cast<std::size_t>(cfg_.workers));

  const Environment& env0 = *worker_envs_.front();
  if (cfg_.use_thought) {
    candidates_ = load_candidate_set(cfg_.candidate_file, *provider_);
    cfg_.reasoner_options.menu_size = static_cast<int>(candidates_.candidates.size());
    if (!cfg_.cot_cache_file.empty()) {
      cot_cache_ = std::make_shared<CotCache>(cfg_.cot_cache_file);
    }
    switch (cfg_.reasoner) {
      case ReasonerBackend::cache:
        reasoner_ = std::make_unique<CacheReasoner>(cot_cache_, cfg_.reasoner_options);
        break;
      case ReasonerBackend::template_rule:
        reasoner_ =
            std::make_unique<TemplateReasoner>(env0.id(), cfg_.reasoner_options, cot_cache_);
        break;
      case ReasonerBackend::remote:
        if (!cot_cache_) {
          throw ConfigError("config: reasoner.cache_file is required for the remote backend");
        }
        reasoner_ = std::make_unique<RemoteReasoner>(cfg_.remote_reasoner,
                                                     env0.task_description(), cot_cache_,
                                                     cfg_.reasoner_options);
        break;
    }
  }

  int base = 0;
  switch (cfg_.input_mode) {
    case InputMode::text: base = provider_->dimension(); break;
    case InputMode::symbolic: base = env0.symbolic_dim(); break;
    case InputMode::text_and_symbolic: base = provider_->dimension() + env0.symbolic_dim(); break;
  }
  input_dim_ = base + (cfg_.use_thought ? provider_->dimension() : 0);
}

void BilevelTrainer::initialize(std::uint64_t seed) {
  run_seed_ = seed;
  episode_counter_ = 0;

  ActionPolicyConfig ac;
  ac.input_dim = input_dim_;
  ac.num_actions = worker_envs_.front()->num_actions();
  ac.hidden_width = cfg_.hidden_width;
  ac.eps_floor = cfg_.eps_floor;
  ac.init_seed = derive_seed(seed, kActionInitStream);
  action_policy_.emplace(ac);

  prompt_policy_.reset();
  random_selector_.reset();
  if (cfg_.use_thought) {
    if (cfg_.selector == SelectorKind::learned) {
      PromptPolicyConfig pc = cfg_.prompt_policy;
      pc.init_seed = derive_seed(seed, kPromptInitStream);
      prompt_policy_.emplace(candidates_, provider_, cfg_.history_window, pc);
    } else if (cfg_.selector == SelectorKind::random_uniform) {
      random_selector_.emplace(static_cast<int>(candidates_.candidates.size()));
    }
  }

  ppo_rng_.seed(derive_seed(seed, kPpoShuffleStream));
  initialized_ = true;
  last_good_checkpoint_ = checkpoint();
}

void BilevelTrainer::require_initialized() const {
  if (!initialized_) throw Error("trainer: call initialize() or load_checkpoint() first");
}

const ActionPolicy& BilevelTrainer::action_policy() const {
  require_initialized();
  return *action_policy_;
}

const PromptPolicy* BilevelTrainer::prompt_policy() const {
  return prompt_policy_ ? &*prompt_policy_ : nullptr;
}

void BilevelTrainer::set_trace_sink(std::ostream* sink) {
  if (sink && cfg_.workers != 1) throw ConfigError("trace requires a single rollout worker");
  trace_sink_ = sink;
}

const Eigen::VectorXd& BilevelTrainer::embed_text_memo(int worker, const std::string& text) {
  auto& memo = worker_embed_memo_[static_cast<std::size_t>(worker)];
  auto it = memo.find(text);
  if (it == memo.end()) {
    it = memo.emplace(text, provider_->embed(text).values).first;
  }
  return it->second;
}

Eigen::VectorXd BilevelTrainer::compose_input(int worker, const Observation& obs,
                                              const Thought* thought) {
  Eigen::VectorXd input(input_dim_);
  Eigen::Index offset = 0;
  if (cfg_.input_mode == InputMode::text || cfg_.input_mode == InputMode::text_and_symbolic) {
    const Eigen::VectorXd& e = embed_text_memo(worker, obs.text);
    input.segment(offset, e.size()) = e;
    offset += e.size();
  }
  if (cfg_.input_mode == InputMode::symbolic ||
      cfg_.input_mode == InputMode::text_and_symbolic) {
    if (!obs.symbolic) throw Error("symbolic input mode: observation has no symbolic vector");
    input.segment(offset, obs.symbolic->size()) = *obs.symbolic;
    offset += obs.symbolic->size();
  }
  if (cfg_.use_thought) {
    if (!thought) throw Error("thought input expected but no thought provided");
    const Eigen::VectorXd& e = embed_text_memo(worker, thought->text);
    input.segment(offset, e.size()) = e;
    offset += e.size();
  }
  return input;
}

BilevelTrainer::RolloutResult BilevelTrainer::rollout_episode(int worker, int episode_index,
                                                              bool greedy,
                                                              std::uint64_t seed_base) {
  Environment& env = *worker_envs_[static_cast<std::size_t>(worker)];
  Rng rng(derive_seed(seed_base, kPolicyStreamBase + static_cast<std::uint64_t>(episode_index)));
  Observation obs =
      env.reset(derive_seed(seed_base, kEnvStreamBase + static_cast<std::uint64_t>(episode_index)));

  std::vector<Observation> history{obs};
  std::optional<UcbSelector> ucb;
  if (cfg_.use_thought && cfg_.selector == SelectorKind::ucb) {
    ucb.emplace(static_cast<int>(candidates_.candidates.size()), cfg_.ucb_exploration);
  }

  RolloutResult result;
  double raw = 0.0;
  double entropy_sum = 0.0;
  int t = 0;
  while (!env.done()) {
    TransitionRecord rec;
    rec.obs = obs;

    const Thought* thought = nullptr;
    if (cfg_.use_thought) {
      int prompt_id = 0;
      if (cfg_.selector == SelectorKind::learned) {
        const std::string htext = history_text(history, cfg_.history_window);
        const Eigen::VectorXd& hvals = embed_text_memo(worker, htext);
        const PromptDecision pd =
            prompt_policy_->decide(EmbeddingVector{hvals, provider_->provider_id()}, rng);
        prompt_id = pd.prompt_id;
        rec.prompt_log_prob = pd.log_prob;
        rec.history_embedding = hvals;
      } else if (cfg_.selector == SelectorKind::random_uniform) {
        prompt_id = random_selector_->select(rng);
      } else {
        prompt_id = ucb->select();
      }
      rec.prompt_id = prompt_id;
      rec.thought =
          reasoner_->reason(obs, candidates_.candidates[static_cast<std::size_t>(prompt_id)]);
      thought = &rec.thought;
    }

    rec.policy_input = compose_input(worker, obs, thought);
    ActionDecision ad;
    if (greedy) {
      ad.distribution = action_policy_->distribution(rec.policy_input);
      Eigen::Index best = 0;
      ad.distribution.maxCoeff(&best);
      ad.action = static_cast<int>(best);
      ad.log_prob = std::log(ad.distribution[ad.action]);
      ad.entropy = entropy(ad.distribution);
      ad.value = action_policy_->value_estimate(rec.policy_input);
    } else {
      ad = action_policy_->act(rec.policy_input, rng);
    }

    const std::string digest = env.state_digest();
    const StepOutcome out = env.step(ad.action);

    rec.action = ad.action;
    rec.action_log_prob = ad.log_prob;
    rec.value = ad.value;
    rec.entropy = ad.entropy;
    rec.action_distribution = ad.distribution;
    rec.reward = out.reward;
    rec.done = out.done;
    rec.next_obs = out.observation;

    if (ucb) {
      // Same unit convention as the learned selector's outer returns; keeps
      // the exploration constant meaningful across objectives.
      ucb->update(rec.prompt_id, outer_reward_scale() *
                                     (cfg_.objective == PromptObjective::env_reward
                                          ? out.reward
                                          : -ad.entropy));
    }

    raw += out.reward;
    entropy_sum += ad.entropy;

    if (trace_sink_) {
      nlohmann::json line;
      line["t"] = t;
      line["state_digest"] = digest;
      line["obs_text"] = obs.text;
      line["situation"] = obs.situation;
      line["prompt_id"] = rec.prompt_id;
      line["action"] = rec.action;
      line["reward"] = rec.reward;
      line["done"] = rec.done;
      *trace_sink_ << line.dump() << '\n';
    }

    result.trajectory.push_back(std::move(rec));
    obs = out.observation;
    history.push_back(obs);
    if (static_cast<int>(history.size()) > cfg_.history_window + 1) {
      history.erase(history.begin());
    }
    ++t;
  }

  result.metrics.episode = episode_index;
  result.metrics.raw_reward = raw;
  result.metrics.norm_reward = normalize_return(raw, env.return_bounds());
  result.metrics.mean_entropy = t > 0 ? entropy_sum / t : 0.0;
  result.metrics.steps = t;
  return result;
}

std::vector<Trajectory> BilevelTrainer::collect_batch(int episodes,
                                                      std::vector<EpisodeMetrics>* metrics_out) {
  require_initialized();
  if (episodes < 1) throw Error("collect_batch: need at least one episode");

  std::vector<RolloutResult> results(static_cast<std::size_t>(episodes));
  const int start = episode_counter_;
  const int workers = std::min(cfg_.workers, episodes);
  if (workers <= 1) {
    for (int i = 0; i < episodes; ++i) {
      results[static_cast<std::size_t>(i)] = rollout_episode(0, start + i, false, run_seed_);
    }
  } else {
    std::vector<std::thread> pool;
    std::mutex error_mutex;
    std::exception_ptr first_error;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int i = w; i < episodes; i += workers) {
            results[static_cast<std::size_t>(i)] =
                rollout_episode(w, start + i, false, run_seed_);
          }
        } catch (...) {
          const std::scoped_lock lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }
  episode_counter_ += episodes;

  std::vector<Trajectory> batch;
  batch.reserve(results.size());
  for (auto& r : results) {
    if (metrics_out) {
      r.metrics.seed = run_seed_;
      metrics_out->push_back(r.metrics);
    }
    batch.push_back(std::move(r.trajectory));
  }
  return batch;
}

void BilevelTrainer::update_outer(std::span<const Trajectory> batch) {
  require_initialized();
  if (!prompt_policy_) return;  // random/UCB/vanilla: no gradient state to touch
  for (int e = 0; e < cfg_.outer_epochs; ++e) {
    prompt_policy_->pg_update(batch, cfg_.objective, cfg_.outer_gamma, cfg_.outer_learning_rate,
                              outer_reward_scale());
  }
}

// Puts both outer objectives in comparable units, so the configured learning
// rate carries the same meaning whichever one is selected: step entropies are
// measured against the uniform distribution's ln(A), raw environment rewards
// against the environment's return range.
double BilevelTrainer::outer_reward_scale() const {
  if (cfg_.objective == PromptObjective::env_reward) {
    const auto bounds = worker_envs_.front()->return_bounds();
    return 1.0 / (bounds.second - bounds.first);
  }
  return 1.0 / std::log(static_cast<double>(worker_envs_.front()->num_actions()));
}

PpoStats BilevelTrainer::update_inner(std::span<const Trajectory> batch) {
  require_initialized();
  return action_policy_->ppo_update(batch, cfg_.ppo, ppo_rng_);
}

SeedResult BilevelTrainer::train(std::uint64_t seed) {
  initialize(seed);
  SeedResult result;
  result.seed = seed;

  int batches = 0;
  for (int done = 0; done < cfg_.episodes;) {
    const int n = std::min(cfg_.rollout_batch, cfg_.episodes - done);
    std::vector<EpisodeMetrics> metrics;
    const std::vector<Trajectory> batch = collect_batch(n, &metrics);
    for (const auto& m : metrics) result.episodes.push_back(m);

    update_outer(batch);
    update_inner(batch);

    done += n;
    ++batches;
    if (cfg_.checkpoint_every <= 0 || batches % cfg_.checkpoint_every == 0) {
      last_good_checkpoint_ = checkpoint();
    }
  }

  std::vector<double> norms;
  norms.reserve(result.episodes.size());
  for (const auto& m : result.episodes) norms.push_back(m.norm_reward);
  result.auc = auc_mean(norms);
  result.final_checkpoint = checkpoint();
  last_good_checkpoint_ = result.final_checkpoint;
  return result;
}

std::vector<EpisodeMetrics> BilevelTrainer::evaluate(int episodes, std::uint64_t seed,
                                                     bool greedy) {
  require_initialized();
  if (episodes < 1) throw Error("evaluate: need at least one episode");
  const std::uint64_t base = derive_seed(seed, kEvalRootStream);

  std::vector<RolloutResult> results(static_cast<std::size_t>(episodes));
  const int workers = std::min(cfg_.workers, episodes);
  if (workers <= 1) {
    for (int i = 0; i < episodes; ++i) {
      results[static_cast<std::size_t>(i)] = rollout_episode(0, i, greedy, base);
    }
  } else {
    std::vector<std::thread> pool;
    std::mutex error_mutex;
    std::exception_ptr first_error;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int i = w; i < episodes; i += workers) {
            results[static_cast<std::size_t>(i)] = rollout_episode(w, i, greedy, base);
          }
        } catch (...) {
          const std::scoped_lock lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  std::vector<EpisodeMetrics> metrics;
  metrics.reserve(results.size());
  for (auto& r : results) {
    r.metrics.seed = seed;
    metrics.push_back(r.metrics);
  }
  return metrics;
}

std::vector<ScriptedEpisode> BilevelTrainer::run_scripted(
    Environment& env, int episodes, std::uint64_t base_seed,
    const std::function<int(const Observation&)>& pick_action) {
  if (episodes < 1) throw Error("run_scripted: need at least one episode");
  std::vector<ScriptedEpisode> out;
  out.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    ScriptedEpisode ep;
    Observation obs = env.reset(derive_seed(base_seed, static_cast<std::uint64_t>(e)));
    ep.initial = obs;
    while (!env.done()) {
      const StepOutcome step = env.step(pick_action(obs));
      ep.raw_return += step.reward;
      obs = step.observation;
      ep.steps += 1;
    }
    out.push_back(std::move(ep));
  }
  return out;
}

nlohmann::json BilevelTrainer::checkpoint() const {
  require_initialized();
  nlohmann::json j;
  j["format"] = 1;
  j["env_id"] = worker_envs_.front()->id();
  j["method"] = cfg_.method_label();
  j["seed"] = run_seed_;
  j["episodes_collected"] = episode_counter_;
  j["input_dim"] = input_dim_;
  j["action_policy"] = action_policy_->to_json();
  j["prompt_policy"] = prompt_policy_ ? prompt_policy_->to_json() : nlohmann::json{};
  return j;
}

void BilevelTrainer::load_checkpoint(const nlohmann::json& snapshot) {
  const auto env_id = snapshot.at("env_id").get<std::string>();
  if (env_id != worker_envs_.front()->id()) {
    throw ConfigError("checkpoint was trained on env '" + env_id + "' but the config builds '" +
                      worker_envs_.front()->id() + "'");
  }
  if (snapshot.at("input_dim").get<int>() != input_dim_) {
    throw ConfigError("checkpoint input dimension does not match the configured input mode");
  }
  initialize(snapshot.at("seed").get<std::uint64_t>());
  episode_counter_ = snapshot.at("episodes_collected").get<int>();
  action_policy_ = ActionPolicy::from_json(snapshot.at("action_policy"));
  if (prompt_policy_ && !snapshot.at("prompt_policy").is_null()) {
    prompt_policy_ = PromptPolicy::from_json(snapshot.at("prompt_policy"), provider_);
  }
  last_good_checkpoint_ = snapshot;
}

}  // namespace bilevel
