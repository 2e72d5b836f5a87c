#pragma once

#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "bilevel/action_policy.hpp"
#include "bilevel/cot.hpp"
#include "bilevel/embedding.hpp"
#include "bilevel/environment.hpp"
#include "bilevel/prompt_policy.hpp"
#include "bilevel/selectors.hpp"
#include "bilevel/transition.hpp"

namespace bilevel {

enum class SelectorKind { learned, random_uniform, ucb };
enum class ReasonerBackend { cache, template_rule, remote };

/// Base features handed to the action policy; the thought embedding is
/// appended on top when thoughts are enabled.
enum class InputMode { text, symbolic, text_and_symbolic };

SelectorKind selector_from_string(const std::string& s);
ReasonerBackend reasoner_from_string(const std::string& s);
InputMode input_mode_from_string(const std::string& s);
PromptObjective objective_from_string(const std::string& s);
std::string to_string(SelectorKind k);
std::string to_string(ReasonerBackend b);
std::string to_string(InputMode m);
std::string to_string(PromptObjective o);

/// Fully resolved run settings; built from the harness config JSON.
struct TrainerConfig {
  nlohmann::json env;  // passed through to make_environment

  int embedding_dim = 256;  // local hashed-token provider width

  // Outer loop: prompt selection over the candidate menu.
  std::string candidate_file;
  SelectorKind selector = SelectorKind::learned;
  PromptObjective objective = PromptObjective::neg_entropy;
  double outer_gamma = 0.95;
  double outer_learning_rate = 0.5;
  int outer_epochs = 1;
  double ucb_exploration = 1.0;
  int history_window = 0;
  PromptPolicyConfig prompt_policy;  // init_seed is overridden per run seed

  // Thought backend.
  ReasonerBackend reasoner = ReasonerBackend::cache;
  std::string cot_cache_file;
  ReasonerOptions reasoner_options;  // menu_size is filled from the candidates
  RemoteReasonerConfig remote_reasoner;

  // Inner loop: action policy input and PPO settings.
  bool use_thought = true;  // false = plain PPO baseline, no prompts/thoughts
  InputMode input_mode = InputMode::text;
  int hidden_width = 64;
  double eps_floor = 1e-6;
  PpoConfig ppo;

  // Schedule.
  int episodes = 2000;
  int rollout_batch = 16;
  int workers = 1;
  int checkpoint_every = 0;  // batches between checkpoint snapshots; 0 = final only
  bool trace = false;        // per-step JSONL; requires workers == 1

  static TrainerConfig from_json(const nlohmann::json& run_config);

  /// Short name of the method this config realizes ("bilevel",
  /// "bilevel-random", "bilevel-ucb", "bilevel-env", "vanilla-ppo", ...;
  /// non-text input modes add a suffix). Groups runs in reports.
  std::string method_label() const;

  void validate() const;
};

struct EpisodeMetrics {
  int episode = 0;  // index within the seed's run, 0-based
  std::uint64_t seed = 0;
  double raw_reward = 0.0;
  double norm_reward = 0.0;   // clamped into [0, 1] via the env's bounds
  double mean_entropy = 0.0;  // mean action entropy over the episode's steps
  int steps = 0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<EpisodeMetrics> episodes;
  double auc = 0.0;
  nlohmann::json final_checkpoint;
};

/// Mean of already-normalized per-episode rewards; every value must lie in
/// [0, 1] and the list must be nonempty.
double auc_mean(std::span<const double> normalized_rewards);

/// (raw - lo) / (hi - lo), clamped into [0, 1].
double normalize_return(double raw, std::pair<double, double> bounds);

/// Mean of one metrics field over the first (from_front) or last window
/// episodes; window is clamped to the available count.
double window_mean(std::span<const EpisodeMetrics> episodes, double EpisodeMetrics::*field,
                   int window, bool from_front);

/// Writes "episode,seed,raw_reward,norm_reward,mean_entropy,selector,objective"
/// rows; numbers formatted with "%.10g" so replays are byte-comparable.
void write_metrics_csv(std::ostream& out, std::span<const EpisodeMetrics> episodes,
                       const std::string& selector_label, const std::string& objective_label);

nlohmann::json summary_json(const TrainerConfig& cfg, std::span<const SeedResult> results);

struct ScriptedEpisode {
  Observation initial;
  double raw_return = 0.0;
  int steps = 0;
};

/// Orchestrates the alternating two-policy loop: batched rollouts through
/// prompt selection -> thought lookup -> action sampling -> environment step,
/// then one outer update (learned selector only) and one PPO update per
/// batch. The rollout buffer lives only for its batch.
class BilevelTrainer {
 public:
  explicit BilevelTrainer(TrainerConfig cfg,
                          std::shared_ptr<const EmbeddingProvider> provider = nullptr);

  /// Deterministically (re)creates both policies and all RNG streams for one
  /// run seed. Called by train(); exposed for stepwise tests.
  void initialize(std::uint64_t seed);

  /// Rolls out `episodes` episodes (in parallel when workers > 1), advancing
  /// the episode counter. Metrics for each episode are appended to
  /// *metrics_out when given.
  std::vector<Trajectory> collect_batch(int episodes,
                                        std::vector<EpisodeMetrics>* metrics_out = nullptr);

  /// Policy-gradient ascent on the prompt policy. No-op unless the selector
  /// is learned (random/UCB runs never touch gradient state).
  void update_outer(std::span<const Trajectory> batch);

  /// Unit conversion applied to outer rewards: 1/ln(A) for neg_entropy,
  /// 1/(return range) for env_reward.
  double outer_reward_scale() const;

  /// Clipped-surrogate update of the action policy.
  PpoStats update_inner(std::span<const Trajectory> batch);

  /// Full run for one seed: initialize, then episodes/rollout_batch rounds of
  /// collect + outer update + inner update.
  SeedResult train(std::uint64_t seed);

  /// Rollouts with frozen parameters; greedy picks the argmax action.
  std::vector<EpisodeMetrics> evaluate(int episodes, std::uint64_t seed, bool greedy);

  /// Runs raw environment episodes under an arbitrary action rule (no
  /// policies involved); for analytic-oracle checks and scripted traces.
  static std::vector<ScriptedEpisode> run_scripted(
      Environment& env, int episodes, std::uint64_t base_seed,
      const std::function<int(const Observation&)>& pick_action);

  nlohmann::json checkpoint() const;
  void load_checkpoint(const nlohmann::json& snapshot);
  const nlohmann::json& last_good_checkpoint() const { return last_good_checkpoint_; }

  const TrainerConfig& config() const { return cfg_; }
  const Environment& env() const { return *worker_envs_.front(); }
  int input_dim() const { return input_dim_; }
  const ActionPolicy& action_policy() const;
  const PromptPolicy* prompt_policy() const;
  int episodes_collected() const { return episode_counter_; }

  /// Per-step JSONL sink; only valid with workers == 1.
  void set_trace_sink(std::ostream* sink);

 private:
  struct RolloutResult {
    Trajectory trajectory;
    EpisodeMetrics metrics;
  };

  RolloutResult rollout_episode(int worker, int episode_index, bool greedy,
                                std::uint64_t seed_base);
  const Eigen::VectorXd& embed_text_memo(int worker, const std::string& text);
  Eigen::VectorXd compose_input(int worker, const Observation& obs, const Thought* thought);
  void require_initialized() const;

  TrainerConfig cfg_;
  std::shared_ptr<const EmbeddingProvider> provider_;
  std::vector<std::unique_ptr<Environment>> worker_envs_;
  std::vector<std::unordered_map<std::string, Eigen::VectorXd>> worker_embed_memo_;
  CandidateSet candidates_;  // empty in vanilla mode
  std::shared_ptr<CotCache> cot_cache_;
  std::unique_ptr<Reasoner> reasoner_;
  int input_dim_ = 0;

  std::optional<ActionPolicy> action_policy_;
  std::optional<PromptPolicy> prompt_policy_;
  std::optional<RandomSelector> random_selector_;

  std::uint64_t run_seed_ = 0;
  bool initialized_ = false;
  int episode_counter_ = 0;
  Rng ppo_rng_;
  nlohmann::json last_good_checkpoint_;
  std::ostream* trace_sink_ = nullptr;
};

}  // namespace bilevel
