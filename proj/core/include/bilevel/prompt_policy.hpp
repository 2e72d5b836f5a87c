#pragma once

#include <Eigen/Core>
#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <span>

#include "bilevel/embedding.hpp"
#include "bilevel/prompt_candidates.hpp"
#include "bilevel/rng.hpp"
#include "bilevel/running_norm.hpp"
#include "bilevel/transition.hpp"

namespace bilevel {

enum class Similarity { dot, cosine };

/// Which signal the outer update maximizes: the negated action-distribution
/// entropy (default), or the plain environment reward (ablation).
enum class PromptObjective { neg_entropy, env_reward };

// How the two projectors start out. Scores are similarities in the projected
// space, so the init decides what the policy believes before any update:
//   independent — two unrelated random maps; initial scores are noise around
//     zero and the menu starts near-uniform.
//   shared — the observation projector is a copy of the prompt projector, so
//     both text kinds land in the same space and initial scores approximate
//     the raw embedding similarity (Johnson-Lindenstrauss), up to projection
//     noise of order 1/sqrt(proj_dim).
//   identity — both projectors start as the exact identity (requires
//     proj_dim == embedding dim); initial scores are exactly the raw
//     similarities, i.e. the lexical overlap between candidate and
//     observation, with no noise.
// The matrices diverge freely once training begins.
enum class ProjectionInit { independent, shared, identity };

struct PromptPolicyConfig {
  int proj_dim = 64;              // shared projection width m
  double temperature_init = 1.0;  // optimized as log-temperature
  // Projector entries start uniform(-s, s). 0 picks s = sqrt(3/m), which makes
  // E[P^T P] = I so the projected dot product is an unbiased estimate of the
  // raw embedding similarity at init instead of an arbitrarily shrunken one.
  double init_scale = 0.0;
  ProjectionInit projection_init = ProjectionInit::shared;
  Similarity similarity = Similarity::dot;
  bool mean_baseline = true;      // subtract the batch-mean return
  // Global-norm cap on each policy-gradient step (0 disables). Early batches,
  // before the action policy differentiates anything, produce pure-luck
  // returns whose kicks can wipe out the initial score structure; the cap
  // bounds them without biasing the accumulated direction.
  double max_grad_norm = 1.0;
  std::uint64_t init_seed = 0;
};

struct PromptDecision {
  int prompt_id = -1;
  double log_prob = 0.0;
  Eigen::VectorXd distribution;
};

/// Softmax menu policy over a fixed candidate set. Scores are projected
/// similarities between candidate embeddings and the embedded recent
/// observation history: s_i = sim(P e_i, O z(e_o)) / T with learnable P, O and
/// log T. Trained with score-function (REINFORCE) ascent on discounted
/// return-to-go of the chosen outer objective, optional mean baseline.
///
/// z is a running per-dimension standardization of the history embeddings
/// (identity until the first observe_histories call, so initial scores keep
/// their raw-similarity meaning). Standardizing zeroes the feature mass every
/// observation shares — the direction along which pure-luck returns would
/// otherwise drag all scores together — and amplifies the features that
/// actually distinguish situations.
class PromptPolicy {
 public:
  PromptPolicy(CandidateSet candidates, std::shared_ptr<const EmbeddingProvider> provider,
               int history_window, PromptPolicyConfig cfg = {});

  int num_candidates() const { return static_cast<int>(candidates_.candidates.size()); }
  const CandidateSet& candidates() const { return candidates_; }
  int history_window() const { return history_window_; }

  /// Menu distribution given an embedded history. Rejects embeddings from a
  /// different provider or dimension.
  Eigen::VectorXd distribution(const EmbeddingVector& history_embedding) const;

  PromptDecision decide(const EmbeddingVector& history_embedding, Rng& rng) const;

  /// Embeds the recent history with this policy's provider and window, then
  /// samples. The common per-step entry point.
  PromptDecision sample(std::span<const Observation> history, Rng& rng) const;

  EmbeddingVector embed_history_window(std::span<const Observation> history) const;

  /// Discounted suffix sums of the outer reward, one per step: negated step
  /// entropies for neg_entropy, raw environment rewards for env_reward.
  /// gamma must lie in [0, 1).
  static std::vector<double> return_to_go(const Trajectory& traj, PromptObjective objective,
                                          double gamma);
  static std::vector<double> entropy_return_to_go(const Trajectory& traj, double gamma) {
    return return_to_go(traj, PromptObjective::neg_entropy, gamma);
  }

  struct Gradients {
    Eigen::MatrixXd proj_prompt;
    Eigen::MatrixXd proj_obs;
    double log_temperature = 0.0;
    bool all_finite() const;
  };

  /// Score-function gradient of the surrogate J = sum_traj w_traj * sum_t
  /// log pi(p_t | h_t) * A_t, where A_t is reward_scale times the
  /// return-to-go, minus the batch mean baseline (when enabled). Empty
  /// `weights` means 1/N per trajectory (the Monte Carlo estimate); explicit
  /// weights support exact enumeration. reward_scale puts different outer
  /// objectives in comparable units (e.g. 1/ln(A) for entropies, 1/range for
  /// environment rewards) so one learning rate means the same thing for both.
  Gradients surrogate_gradient(std::span<const Trajectory> trajectories,
                               PromptObjective objective, double gamma,
                               std::span<const double> weights = {},
                               double reward_scale = 1.0) const;

  /// The surrogate value the gradient above differentiates; for gradient
  /// checks via finite differences.
  double surrogate_value(std::span<const Trajectory> trajectories, PromptObjective objective,
                         double gamma, std::span<const double> weights = {},
                         double reward_scale = 1.0) const;

  void apply_ascent(const Gradients& grads, double learning_rate);

  /// One plain-SGD ascent step on the Monte Carlo surrogate over `trajectories`.
  /// learning_rate 0 is an exact no-op. Throws on empty input or non-finite
  /// gradients.
  void pg_update(std::span<const Trajectory> trajectories, PromptObjective objective,
                 double gamma, double learning_rate, double reward_scale = 1.0);

  /// Folds the batch's history embeddings into the running standardization.
  /// Call once per collected batch, after all gradient steps on it, so the
  /// statistics in effect during an update match the ones the decisions were
  /// sampled under.
  void observe_histories(std::span<const Trajectory> trajectories);
  const RunningNorm& history_norm() const { return history_norm_; }

  // Parameter access (tests, checkpoints, finite differences).
  const Eigen::MatrixXd& proj_prompt() const { return proj_prompt_; }
  const Eigen::MatrixXd& proj_obs() const { return proj_obs_; }
  double log_temperature() const { return log_temperature_; }
  double temperature() const;
  void set_parameters(Eigen::MatrixXd proj_prompt, Eigen::MatrixXd proj_obs,
                      double log_temperature);
  Eigen::VectorXd flatten_parameters() const;
  void unflatten_parameters(const Eigen::VectorXd& flat);

  nlohmann::json to_json() const;
  static PromptPolicy from_json(const nlohmann::json& j,
                                std::shared_ptr<const EmbeddingProvider> provider);

 private:
  /// Scores of an already-standardized history vector.
  Eigen::VectorXd scores(const Eigen::VectorXd& history_values) const;

  CandidateSet candidates_;
  std::shared_ptr<const EmbeddingProvider> provider_;
  int history_window_ = 0;
  PromptPolicyConfig cfg_;
  Eigen::MatrixXd proj_prompt_;  // m x d
  Eigen::MatrixXd proj_obs_;     // m x d
  double log_temperature_ = 0.0;
};

}  // namespace bilevel
