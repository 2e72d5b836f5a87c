#include "bilevel/action_policy.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "bilevel/errors.hpp"

namespace bilevel {

namespace {

MlpShape policy_shape(const ActionPolicyConfig& cfg) {
  return MlpShape{cfg.input_dim, {cfg.hidden_width, cfg.hidden_width}, cfg.num_actions};
}

MlpShape value_shape(const ActionPolicyConfig& cfg) {
  return MlpShape{cfg.input_dim, {cfg.hidden_width, cfg.hidden_width}, 1};
}

void validate(const ActionPolicyConfig& cfg) {
  if (cfg.input_dim < 1) throw ConfigError("action policy: input_dim must be >= 1");
  if (cfg.num_actions < 2) throw ConfigError("action policy: need at least two actions");
  if (cfg.hidden_width < 1) throw ConfigError("action policy: hidden_width must be >= 1");
  if (cfg.eps_floor < 0.0 || cfg.eps_floor * cfg.num_actions >= 1.0) {
    throw ConfigError("action policy: eps_floor must lie in [0, 1/num_actions)");
  }
}

void validate(const PpoConfig& cfg) {
  if (cfg.gamma < 0.0 || cfg.gamma > 1.0) throw ConfigError("ppo: gamma must lie in [0, 1]");
  if (cfg.gae_lambda < 0.0 || cfg.gae_lambda > 1.0) {
    throw ConfigError("ppo: gae_lambda must lie in [0, 1]");
  }
  if (cfg.clip_eps <= 0.0) throw ConfigError("ppo: clip_eps must be > 0");
  if (cfg.epochs < 1) throw ConfigError("ppo: epochs must be >= 1");
  if (cfg.minibatch_size < 1) throw ConfigError("ppo: minibatch_size must be >= 1");
  if (cfg.learning_rate < 0.0) throw ConfigError("ppo: learning_rate must be >= 0");
  if (cfg.value_learning_rate < 0.0) {
    throw ConfigError("ppo: value_learning_rate must be >= 0");
  }
}

}  // namespace

ActionPolicy::ActionPolicy(ActionPolicyConfig cfg)
    : cfg_((validate(cfg), cfg)),
      policy_net_(policy_shape(cfg), derive_seed(cfg.init_seed, 0x706f6c), true),
      value_net_(value_shape(cfg), derive_seed(cfg.init_seed, 0x76616c), true),
      policy_opt_(policy_net_),
      value_opt_(value_net_) {}

void ActionPolicy::check_input(const Eigen::VectorXd& input) const {
  if (input.size() != cfg_.input_dim) {
    throw Error("action policy: input has dimension " + std::to_string(input.size()) +
                ", expected " + std::to_string(cfg_.input_dim));
  }
}

Eigen::VectorXd ActionPolicy::floored_softmax(const Eigen::VectorXd& logits) const {
  const Eigen::VectorXd soft = softmax(logits);
  const double keep = 1.0 - cfg_.eps_floor * cfg_.num_actions;
  return ((keep * soft).array() + cfg_.eps_floor).matrix();
}

Eigen::VectorXd ActionPolicy::distribution(const Eigen::VectorXd& input) const {
  check_input(input);
  return floored_softmax(policy_net_.forward(input_norm_.apply(input)));
}

ActionDecision ActionPolicy::act(const Eigen::VectorXd& input, Rng& rng) const {
  check_input(input);
  const Eigen::VectorXd z = input_norm_.apply(input);
  ActionDecision d;
  d.distribution = floored_softmax(policy_net_.forward(z));
  d.action = sample_categorical(d.distribution, rng);
  d.log_prob = std::log(d.distribution[d.action]);
  d.entropy = entropy(d.distribution);
  d.value = value_net_.forward(z)[0];
  return d;
}

int ActionPolicy::greedy_action(const Eigen::VectorXd& input) const {
  const Eigen::VectorXd probs = distribution(input);
  Eigen::Index best = 0;
  probs.maxCoeff(&best);
  return static_cast<int>(best);
}

double ActionPolicy::value_estimate(const Eigen::VectorXd& input) const {
  check_input(input);
  return value_net_.forward(input_norm_.apply(input))[0];
}

std::vector<double> ActionPolicy::discounted_return(std::span<const double> rewards,
                                                    double gamma) {
  if (gamma < 0.0 || gamma > 1.0) throw Error("discounted_return: gamma must lie in [0, 1]");
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (int t = static_cast<int>(rewards.size()) - 1; t >= 0; --t) {
    acc = rewards[static_cast<std::size_t>(t)] + gamma * acc;
    out[static_cast<std::size_t>(t)] = acc;
  }
  return out;
}

std::vector<double> ActionPolicy::gae_advantages(std::span<const double> rewards,
                                                 std::span<const double> values, double gamma,
                                                 double lambda) {
  if (rewards.empty() || rewards.size() != values.size()) {
    throw Error("gae_advantages: rewards and values must be equal-length and nonempty");
  }
  const int n = static_cast<int>(rewards.size());
  std::vector<double> adv(rewards.size());
  double carry = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    const double next_value = t + 1 < n ? values[static_cast<std::size_t>(t) + 1] : 0.0;
    const double delta =
        rewards[static_cast<std::size_t>(t)] + gamma * next_value - values[static_cast<std::size_t>(t)];
    carry = delta + gamma * lambda * carry;
    adv[static_cast<std::size_t>(t)] = carry;
  }
  return adv;
}

double ActionPolicy::clipped_surrogate_term(double ratio, double advantage, double clip_eps) {
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantage;
  return std::min(ratio * advantage, clipped);
}

std::vector<StepSample> ActionPolicy::prepare_samples(std::span<const Trajectory> batch,
                                                      const PpoConfig& cfg) {
  std::vector<StepSample> samples;
  for (const auto& traj : batch) {
    if (traj.empty()) continue;
    std::vector<double> rewards, values;
    rewards.reserve(traj.size());
    values.reserve(traj.size());
    for (const auto& rec : traj) {
      rewards.push_back(rec.reward);
      values.push_back(rec.value);
    }
    const auto adv = gae_advantages(rewards, values, cfg.gamma, cfg.gae_lambda);
    const auto ret = discounted_return(rewards, cfg.gamma);
    for (std::size_t t = 0; t < traj.size(); ++t) {
      StepSample s;
      s.input = traj[t].policy_input;
      s.action = traj[t].action;
      s.old_log_prob = traj[t].action_log_prob;
      s.advantage = adv[t];
      s.value_target = ret[t];
      samples.push_back(std::move(s));
    }
  }
  if (samples.empty()) return samples;

  // Normalize advantages over the whole batch, not per minibatch, so the
  // update direction does not depend on the shuffle.
  double mean = 0.0;
  for (const auto& s : samples) mean += s.advantage;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (const auto& s : samples) var += (s.advantage - mean) * (s.advantage - mean);
  var /= static_cast<double>(samples.size());
  const double inv_std = 1.0 / (std::sqrt(var) + 1e-8);
  for (auto& s : samples) s.advantage = (s.advantage - mean) * inv_std;
  return samples;
}

double ActionPolicy::policy_surrogate_loss(std::span<const StepSample> samples,
                                           double clip_eps) const {
  if (samples.empty()) throw Error("action policy: empty sample set");
  double total = 0.0;
  for (const auto& s : samples) {
    const Eigen::VectorXd probs = floored_softmax(policy_net_.forward(s.input));
    const double ratio = std::exp(std::log(probs[s.action]) - s.old_log_prob);
    total += clipped_surrogate_term(ratio, s.advantage, clip_eps);
  }
  return -total / static_cast<double>(samples.size());
}

Mlp::Gradients ActionPolicy::policy_surrogate_gradient(std::span<const StepSample> samples,
                                                       double clip_eps) const {
  if (samples.empty()) throw Error("action policy: empty sample set");
  Mlp::Gradients grads;
  grads.resize_like(policy_net_);
  grads.set_zero();
  const double keep = 1.0 - cfg_.eps_floor * cfg_.num_actions;
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  for (const auto& s : samples) {
    Mlp::Activations acts;
    const Eigen::VectorXd logits = policy_net_.forward(s.input, acts);
    const Eigen::VectorXd soft = softmax(logits);
    const double floored = keep * soft[s.action] + cfg_.eps_floor;
    const double ratio = std::exp(std::log(floored) - s.old_log_prob);

    // Gradient flows only where the unclipped term attains the min.
    const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * s.advantage;
    if (ratio * s.advantage > clipped) continue;
    const double coef = -inv_n * ratio * s.advantage;  // dLoss/d log p(a)

    // d log p_floor(a) / d logits = keep * soft_a / p_floor(a) * (onehot - soft)
    Eigen::VectorXd grad_logits = (-coef * keep * soft[s.action] / floored) * soft;
    grad_logits[s.action] += coef * keep * soft[s.action] / floored;
    policy_net_.backward(s.input, acts, grad_logits, grads);
  }
  return grads;
}

double ActionPolicy::value_loss(std::span<const StepSample> samples) const {
  if (samples.empty()) throw Error("action policy: empty sample set");
  double total = 0.0;
  for (const auto& s : samples) {
    const double err = value_net_.forward(s.input)[0] - s.value_target;
    total += 0.5 * err * err;
  }
  return total / static_cast<double>(samples.size());
}

Mlp::Gradients ActionPolicy::value_gradient(std::span<const StepSample> samples) const {
  if (samples.empty()) throw Error("action policy: empty sample set");
  Mlp::Gradients grads;
  grads.resize_like(value_net_);
  grads.set_zero();
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  for (const auto& s : samples) {
    Mlp::Activations acts;
    const Eigen::VectorXd out = value_net_.forward(s.input, acts);
    Eigen::VectorXd grad_out(1);
    grad_out[0] = inv_n * (out[0] - s.value_target);
    value_net_.backward(s.input, acts, grad_out, grads);
  }
  return grads;
}

PpoStats ActionPolicy::ppo_update(std::span<const Trajectory> batch, const PpoConfig& cfg,
                                  Rng& rng) {
  validate(cfg);
  if (batch.empty()) throw Error("action policy: empty update batch");
  std::vector<StepSample> samples = prepare_samples(batch, cfg);
  if (samples.empty()) throw Error("action policy: update batch has no steps");

  // Normalize with the statistics the rollout used (keeps the first-epoch
  // ratios at exactly 1), then fold this batch in for the next collection.
  for (auto& s : samples) s.input = input_norm_.apply(s.input);
  for (const auto& traj : batch) {
    for (const auto& rec : traj) input_norm_.update(rec.policy_input);
  }

  PpoStats stats;
  stats.steps = static_cast<int>(samples.size());
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.minibatch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch_size));
      std::vector<StepSample> minibatch;
      minibatch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) minibatch.push_back(samples[order[i]]);

      const Mlp::Gradients pol = policy_surrogate_gradient(minibatch, cfg.clip_eps);
      if (!pol.all_finite()) throw Error("action policy: non-finite policy gradient");
      policy_opt_.step(policy_net_, pol, cfg.learning_rate);

      const Mlp::Gradients val = value_gradient(minibatch);
      if (!val.all_finite()) throw Error("action policy: non-finite value gradient");
      value_opt_.step(value_net_, val, cfg.value_learning_rate);
      stats.gradient_steps += 1;
    }
  }
  stats.policy_loss = policy_surrogate_loss(samples, cfg.clip_eps);
  stats.value_loss = value_loss(samples);
  return stats;
}

nlohmann::json ActionPolicy::to_json() const {
  nlohmann::json j;
  j["config"] = {{"input_dim", cfg_.input_dim},
                 {"num_actions", cfg_.num_actions},
                 {"hidden_width", cfg_.hidden_width},
                 {"eps_floor", cfg_.eps_floor}};
  j["policy_net"] = policy_net_.to_json();
  j["value_net"] = value_net_.to_json();
  j["policy_opt"] = policy_opt_.to_json();
  j["value_opt"] = value_opt_.to_json();
  j["input_norm"] = input_norm_.to_json();
  return j;
}

ActionPolicy ActionPolicy::from_json(const nlohmann::json& j) {
  ActionPolicyConfig cfg;
  const auto& jc = j.at("config");
  cfg.input_dim = jc.at("input_dim").get<int>();
  cfg.num_actions = jc.at("num_actions").get<int>();
  cfg.hidden_width = jc.at("hidden_width").get<int>();
  cfg.eps_floor = jc.at("eps_floor").get<double>();
  ActionPolicy policy(cfg);
  Mlp net = Mlp::from_json(j.at("policy_net"));
  if (net.parameter_count() != policy.policy_net_.parameter_count()) {
    throw ConfigError("action policy checkpoint: policy net shape mismatch");
  }
  policy.policy_net_ = std::move(net);
  Mlp vnet = Mlp::from_json(j.at("value_net"));
  if (vnet.parameter_count() != policy.value_net_.parameter_count()) {
    throw ConfigError("action policy checkpoint: value net shape mismatch");
  }
  policy.value_net_ = std::move(vnet);
  if (j.contains("policy_opt")) policy.policy_opt_.load_json(j.at("policy_opt"), policy.policy_net_);
  if (j.contains("value_opt")) policy.value_opt_.load_json(j.at("value_opt"), policy.value_net_);
  if (j.contains("input_norm")) {
    RunningNorm norm = RunningNorm::from_json(j.at("input_norm"));
    if (norm.count > 0.0 && norm.mean.size() != cfg.input_dim) {
      throw ConfigError("action policy checkpoint: input_norm dimension mismatch");
    }
    policy.input_norm_ = std::move(norm);
  }
  return policy;
}

}  // namespace bilevel
