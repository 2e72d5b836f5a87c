#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <span>
#include <vector>

#include "bilevel/mlp.hpp"
#include "bilevel/rng.hpp"
#include "bilevel/running_norm.hpp"
#include "bilevel/transition.hpp"

namespace bilevel {

struct ActionPolicyConfig {
  int input_dim = 0;
  int num_actions = 0;
  int hidden_width = 64;
  double eps_floor = 1e-6;  // probability floor keeps log probs finite
  std::uint64_t init_seed = 0;
};

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  int epochs = 4;
  int minibatch_size = 64;
  double learning_rate = 3e-4;
  // The critic gets its own, faster schedule: until the value net separates
  // inputs that lead to different returns, episode luck dominates the
  // normalized advantages and drowns out per-action credit.
  double value_learning_rate = 1e-3;
};

struct ActionDecision {
  int action = -1;
  double log_prob = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  Eigen::VectorXd distribution;
};

struct PpoStats {
  int steps = 0;
  int gradient_steps = 0;
  double policy_loss = 0.0;  // mean over the final epoch
  double value_loss = 0.0;
};

/// One flattened training example for the clipped-surrogate and value losses.
struct StepSample {
  Eigen::VectorXd input;
  int action = 0;
  double old_log_prob = 0.0;
  double advantage = 0.0;
  double value_target = 0.0;
};

/// Feedforward softmax policy with a separate value head, trained with
/// clipped-surrogate policy optimization. The output layer starts at zero, so
/// the initial distribution is exactly uniform for every input.
class ActionPolicy {
 public:
  explicit ActionPolicy(ActionPolicyConfig cfg);

  int input_dim() const { return cfg_.input_dim; }
  int num_actions() const { return cfg_.num_actions; }
  const RunningNorm& input_norm() const { return input_norm_; }

  /// Floored softmax over the policy logits of the normalized input:
  /// p = (1 - A * eps) * softmax(logits) + eps, A = num_actions.
  Eigen::VectorXd distribution(const Eigen::VectorXd& input) const;

  ActionDecision act(const Eigen::VectorXd& input, Rng& rng) const;
  int greedy_action(const Eigen::VectorXd& input) const;
  double value_estimate(const Eigen::VectorXd& input) const;

  /// Discounted suffix sums of a reward sequence treated as one full episode.
  static std::vector<double> discounted_return(std::span<const double> rewards, double gamma);

  /// Generalized advantage estimates for one full episode (terminal value 0).
  static std::vector<double> gae_advantages(std::span<const double> rewards,
                                            std::span<const double> values, double gamma,
                                            double lambda);

  /// min(ratio * adv, clip(ratio, 1-eps, 1+eps) * adv): the per-step term the
  /// policy update maximizes.
  static double clipped_surrogate_term(double ratio, double advantage, double clip_eps);

  /// Flattens a trajectory batch into per-step samples: per-episode GAE,
  /// advantages normalized across the whole batch, value targets set to the
  /// episode's discounted returns.
  static std::vector<StepSample> prepare_samples(std::span<const Trajectory> batch,
                                                 const PpoConfig& cfg);

  // Losses on a sample set (means), and their parameter gradients; the pairs
  // are consistent so finite differences can check the analytic gradients.
  // Sample inputs are fed to the networks as-is: ppo_update normalizes them
  // once, with the same statistics the rollout saw.
  double policy_surrogate_loss(std::span<const StepSample> samples, double clip_eps) const;
  Mlp::Gradients policy_surrogate_gradient(std::span<const StepSample> samples,
                                           double clip_eps) const;
  double value_loss(std::span<const StepSample> samples) const;
  Mlp::Gradients value_gradient(std::span<const StepSample> samples) const;

  /// Runs the full clipped-surrogate update on a batch of complete episodes:
  /// epochs x shuffled minibatches, separate Adam steps for policy and value.
  /// Inputs are normalized with the statistics in force during collection;
  /// the running statistics then absorb the batch for the next rollout.
  /// Throws Error on an empty batch or non-finite gradients.
  PpoStats ppo_update(std::span<const Trajectory> batch, const PpoConfig& cfg, Rng& rng);

  const Mlp& policy_net() const { return policy_net_; }
  const Mlp& value_net() const { return value_net_; }
  Mlp& mutable_policy_net() { return policy_net_; }
  Mlp& mutable_value_net() { return value_net_; }

  nlohmann::json to_json() const;
  static ActionPolicy from_json(const nlohmann::json& j);

 private:
  void check_input(const Eigen::VectorXd& input) const;
  Eigen::VectorXd floored_softmax(const Eigen::VectorXd& logits) const;

  ActionPolicyConfig cfg_;
  Mlp policy_net_;
  Mlp value_net_;
  AdamOptimizer policy_opt_;
  AdamOptimizer value_opt_;
  RunningNorm input_norm_;
};

}  // namespace bilevel
