#include "bilevel/prompt_policy.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "bilevel/errors.hpp"
#include "bilevel/mlp.hpp"

namespace bilevel {

namespace {
constexpr double kNormFloor = 1e-30;  // guards cosine division, never hit in practice
}

PromptPolicy::PromptPolicy(CandidateSet candidates,
                           std::shared_ptr<const EmbeddingProvider> provider,
                           int history_window, PromptPolicyConfig cfg)
    : candidates_(std::move(candidates)),
      provider_(std::move(provider)),
      history_window_(history_window),
      cfg_(cfg) {
  if (!provider_) throw ConfigError("prompt policy: embedding provider must be set");
  if (candidates_.candidates.empty()) throw ConfigError("prompt policy: empty candidate set");
  if (history_window_ < 0) throw ConfigError("prompt policy: history window must be >= 0");
  if (cfg_.proj_dim < 1) throw ConfigError("prompt policy: proj_dim must be >= 1");
  if (cfg_.temperature_init <= 0.0) {
    throw ConfigError("prompt policy: temperature_init must be > 0");
  }
  if (cfg_.init_scale < 0.0) {
    throw ConfigError("prompt policy: init_scale must be >= 0 (0 = similarity-preserving)");
  }
  const int d = provider_->dimension();
  for (const auto& c : candidates_.candidates) {
    if (c.embedding.values.size() != d || c.embedding.provider_id != provider_->provider_id()) {
      throw ConfigError("prompt policy: candidate " + std::to_string(c.id) +
                        " embedding does not match the provider");
    }
  }

  const int m = cfg_.proj_dim;
  if (cfg_.projection_init == ProjectionInit::identity && m != d) {
    throw ConfigError("prompt policy: identity init requires proj_dim == embedding dim (" +
                      std::to_string(d) + ")");
  }
  const double scale =
      cfg_.init_scale > 0.0 ? cfg_.init_scale : std::sqrt(3.0 / static_cast<double>(m));
  Rng rng(derive_seed(cfg_.init_seed, 0x70726f6a));
  std::uniform_real_distribution<double> unif(-scale, scale);
  proj_prompt_.resize(m, d);
  proj_obs_.resize(m, d);
  if (cfg_.projection_init == ProjectionInit::identity) {
    proj_prompt_.setIdentity();
  } else {
    for (Eigen::Index c = 0; c < d; ++c) {
      for (Eigen::Index r = 0; r < m; ++r) proj_prompt_(r, c) = unif(rng);
    }
  }
  if (cfg_.projection_init == ProjectionInit::independent) {
    for (Eigen::Index c = 0; c < d; ++c) {
      for (Eigen::Index r = 0; r < m; ++r) proj_obs_(r, c) = unif(rng);
    }
  } else {
    proj_obs_ = proj_prompt_;
  }
  log_temperature_ = std::log(cfg_.temperature_init);
}

double PromptPolicy::temperature() const { return std::exp(log_temperature_); }

Eigen::VectorXd PromptPolicy::scores(const Eigen::VectorXd& history_values) const {
  const int K = num_candidates();
  const Eigen::VectorXd v = proj_obs_ * history_values;
  Eigen::VectorXd s(K);
  const double inv_t = std::exp(-log_temperature_);
  if (cfg_.similarity == Similarity::dot) {
    for (int i = 0; i < K; ++i) {
      const Eigen::VectorXd u = proj_prompt_ * candidates_.candidates[i].embedding.values;
      s[i] = u.dot(v) * inv_t;
    }
  } else {
    const double nv = std::max(v.norm(), kNormFloor);
    for (int i = 0; i < K; ++i) {
      const Eigen::VectorXd u = proj_prompt_ * candidates_.candidates[i].embedding.values;
      const double nu = std::max(u.norm(), kNormFloor);
      s[i] = u.dot(v) / (nu * nv) * inv_t;
    }
  }
  return s;
}

Eigen::VectorXd PromptPolicy::distribution(const EmbeddingVector& history_embedding) const {
  if (history_embedding.provider_id != provider_->provider_id()) {
    throw Error("prompt policy: history embedding from provider '" +
                history_embedding.provider_id + "', expected '" + provider_->provider_id() +
                "'");
  }
  if (history_embedding.values.size() != provider_->dimension()) {
    throw Error("prompt policy: history embedding dimension mismatch");
  }
  return softmax(scores(history_embedding.values));
}

PromptDecision PromptPolicy::decide(const EmbeddingVector& history_embedding, Rng& rng) const {
  PromptDecision d;
  d.distribution = distribution(history_embedding);
  d.prompt_id = sample_categorical(d.distribution, rng);
  d.log_prob = std::log(d.distribution[d.prompt_id]);
  return d;
}

PromptDecision PromptPolicy::sample(std::span<const Observation> history, Rng& rng) const {
  return decide(embed_history_window(history), rng);
}

EmbeddingVector PromptPolicy::embed_history_window(std::span<const Observation> history) const {
  return embed_history(*provider_, history, history_window_);
}

std::vector<double> PromptPolicy::return_to_go(const Trajectory& traj, PromptObjective objective,
                                               double gamma) {
  if (gamma < 0.0 || gamma >= 1.0) {
    throw Error("return_to_go: gamma must lie in [0, 1), got " + std::to_string(gamma));
  }
  std::vector<double> out(traj.size());
  double acc = 0.0;
  for (int t = static_cast<int>(traj.size()) - 1; t >= 0; --t) {
    const double x = objective == PromptObjective::neg_entropy ? -traj[static_cast<std::size_t>(t)].entropy
                                                               : traj[static_cast<std::size_t>(t)].reward;
    acc = x + gamma * acc;
    out[static_cast<std::size_t>(t)] = acc;
  }
  return out;
}

bool PromptPolicy::Gradients::all_finite() const {
  return proj_prompt.allFinite() && proj_obs.allFinite() && std::isfinite(log_temperature);
}

namespace {

/// Per-step baselined advantages for the whole batch, in step order per
/// trajectory: reward_scale * return-to-go, minus (when enabled) the mean
/// scaled return across all batch steps.
std::vector<std::vector<double>> batch_advantages(std::span<const Trajectory> trajectories,
                                                  PromptObjective objective, double gamma,
                                                  bool mean_baseline, double reward_scale) {
  std::vector<std::vector<double>> returns;
  returns.reserve(trajectories.size());
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& traj : trajectories) {
    returns.push_back(PromptPolicy::return_to_go(traj, objective, gamma));
    for (double& r : returns.back()) {
      r *= reward_scale;
      sum += r;
      ++count;
    }
  }
  if (mean_baseline && count > 0) {
    const double baseline = sum / static_cast<double>(count);
    for (auto& rs : returns) {
      for (double& r : rs) r -= baseline;
    }
  }
  return returns;
}

}  // namespace

PromptPolicy::Gradients PromptPolicy::surrogate_gradient(
    std::span<const Trajectory> trajectories, PromptObjective objective, double gamma,
    std::span<const double> weights, double reward_scale) const {
  if (trajectories.empty()) throw Error("prompt policy: empty trajectory batch");
  if (!weights.empty() && weights.size() != trajectories.size()) {
    throw Error("prompt policy: weights size must match trajectory count");
  }
  const int K = num_candidates();
  const int d = provider_->dimension();
  const double default_w = 1.0 / static_cast<double>(trajectories.size());
  const double inv_t = std::exp(-log_temperature_);

  // Candidate embedding matrix E (d x K) and projections U = P E (m x K).
  Eigen::MatrixXd E(d, K);
  for (int i = 0; i < K; ++i) E.col(i) = candidates_.candidates[i].embedding.values;
  const Eigen::MatrixXd U = proj_prompt_ * E;

  const auto advantages =
      batch_advantages(trajectories, objective, gamma, cfg_.mean_baseline, reward_scale);

  Gradients g;
  g.proj_prompt = Eigen::MatrixXd::Zero(proj_prompt_.rows(), proj_prompt_.cols());
  g.proj_obs = Eigen::MatrixXd::Zero(proj_obs_.rows(), proj_obs_.cols());
  g.log_temperature = 0.0;

  for (std::size_t n = 0; n < trajectories.size(); ++n) {
    const double w = weights.empty() ? default_w : weights[n];
    const auto& traj = trajectories[n];
    for (std::size_t t = 0; t < traj.size(); ++t) {
      const auto& rec = traj[t];
      if (rec.prompt_id < 0 || rec.prompt_id >= K) {
        throw Error("prompt policy: record without a valid prompt id");
      }
      if (rec.history_embedding.size() != d) {
        throw Error("prompt policy: record history embedding dimension mismatch");
      }
      const double coef = w * advantages[n][t];
      if (coef == 0.0) continue;

      const Eigen::VectorXd& h = rec.history_embedding;
      const Eigen::VectorXd v = proj_obs_ * h;
      Eigen::VectorXd s(K);
      if (cfg_.similarity == Similarity::dot) {
        s = (U.transpose() * v) * inv_t;
      } else {
        const double nv = std::max(v.norm(), kNormFloor);
        for (int i = 0; i < K; ++i) {
          const double nu = std::max(U.col(i).norm(), kNormFloor);
          s[i] = U.col(i).dot(v) / (nu * nv) * inv_t;
        }
      }
      const Eigen::VectorXd pi = softmax(s);
      Eigen::VectorXd delta = -pi;
      delta[rec.prompt_id] += 1.0;  // one-hot(chosen) - pi

      if (cfg_.similarity == Similarity::dot) {
        g.proj_prompt.noalias() += (coef * inv_t) * v * (E * delta).transpose();
        g.proj_obs.noalias() += (coef * inv_t) * (U * delta) * h.transpose();
      } else {
        const double nv = std::max(v.norm(), kNormFloor);
        const Eigen::VectorXd v_hat = v / nv;
        Eigen::MatrixXd du(U.rows(), K);  // d score_i / d u_i, scaled by delta_i
        Eigen::VectorXd dv = Eigen::VectorXd::Zero(v.size());
        for (int i = 0; i < K; ++i) {
          const double nu = std::max(U.col(i).norm(), kNormFloor);
          const Eigen::VectorXd u_hat = U.col(i) / nu;
          const double c = u_hat.dot(v_hat);
          du.col(i) = delta[i] * (v_hat - c * u_hat) / nu;
          dv += delta[i] * (u_hat - c * v_hat) / nv;
        }
        g.proj_prompt.noalias() += (coef * inv_t) * du * E.transpose();
        g.proj_obs.noalias() += (coef * inv_t) * dv * h.transpose();
      }
      g.log_temperature += -coef * delta.dot(s);
    }
  }
  return g;
}

double PromptPolicy::surrogate_value(std::span<const Trajectory> trajectories,
                                     PromptObjective objective, double gamma,
                                     std::span<const double> weights,
                                     double reward_scale) const {
  if (trajectories.empty()) throw Error("prompt policy: empty trajectory batch");
  if (!weights.empty() && weights.size() != trajectories.size()) {
    throw Error("prompt policy: weights size must match trajectory count");
  }
  const double default_w = 1.0 / static_cast<double>(trajectories.size());
  const auto advantages =
      batch_advantages(trajectories, objective, gamma, cfg_.mean_baseline, reward_scale);

  double value = 0.0;
  for (std::size_t n = 0; n < trajectories.size(); ++n) {
    const double w = weights.empty() ? default_w : weights[n];
    const auto& traj = trajectories[n];
    for (std::size_t t = 0; t < traj.size(); ++t) {
      const auto& rec = traj[t];
      const Eigen::VectorXd pi = softmax(scores(rec.history_embedding));
      value += w * advantages[n][t] * std::log(pi[rec.prompt_id]);
    }
  }
  return value;
}

void PromptPolicy::apply_ascent(const Gradients& grads, double learning_rate) {
  proj_prompt_ += learning_rate * grads.proj_prompt;
  proj_obs_ += learning_rate * grads.proj_obs;
  log_temperature_ += learning_rate * grads.log_temperature;
}

void PromptPolicy::pg_update(std::span<const Trajectory> trajectories, PromptObjective objective,
                             double gamma, double learning_rate, double reward_scale) {
  Gradients grads = surrogate_gradient(trajectories, objective, gamma, {}, reward_scale);
  if (!grads.all_finite()) {
    throw Error("prompt policy: non-finite policy gradient (batch of " +
                std::to_string(trajectories.size()) + " trajectories, temperature " +
                std::to_string(temperature()) + ")");
  }
  if (cfg_.max_grad_norm > 0.0) {
    const double norm =
        std::sqrt(grads.proj_prompt.squaredNorm() + grads.proj_obs.squaredNorm() +
                  grads.log_temperature * grads.log_temperature);
    if (norm > cfg_.max_grad_norm) {
      const double shrink = cfg_.max_grad_norm / norm;
      grads.proj_prompt *= shrink;
      grads.proj_obs *= shrink;
      grads.log_temperature *= shrink;
    }
  }
  apply_ascent(grads, learning_rate);
}

void PromptPolicy::set_parameters(Eigen::MatrixXd proj_prompt, Eigen::MatrixXd proj_obs,
                                  double log_temperature) {
  if (proj_prompt.rows() != proj_prompt_.rows() || proj_prompt.cols() != proj_prompt_.cols() ||
      proj_obs.rows() != proj_obs_.rows() || proj_obs.cols() != proj_obs_.cols()) {
    throw Error("prompt policy: projector shape mismatch");
  }
  proj_prompt_ = std::move(proj_prompt);
  proj_obs_ = std::move(proj_obs);
  log_temperature_ = log_temperature;
}

Eigen::VectorXd PromptPolicy::flatten_parameters() const {
  const Eigen::Index np = proj_prompt_.size();
  const Eigen::Index no = proj_obs_.size();
  Eigen::VectorXd flat(np + no + 1);
  flat.segment(0, np) = Eigen::Map<const Eigen::VectorXd>(proj_prompt_.data(), np);
  flat.segment(np, no) = Eigen::Map<const Eigen::VectorXd>(proj_obs_.data(), no);
  flat[np + no] = log_temperature_;
  return flat;
}

void PromptPolicy::unflatten_parameters(const Eigen::VectorXd& flat) {
  const Eigen::Index np = proj_prompt_.size();
  const Eigen::Index no = proj_obs_.size();
  if (flat.size() != np + no + 1) throw Error("prompt policy: flat parameter size mismatch");
  Eigen::Map<Eigen::VectorXd>(proj_prompt_.data(), np) = flat.segment(0, np);
  Eigen::Map<Eigen::VectorXd>(proj_obs_.data(), no) = flat.segment(np, no);
  log_temperature_ = flat[np + no];
}

nlohmann::json PromptPolicy::to_json() const {
  nlohmann::json j;
  j["task"] = candidates_.task;
  j["candidates"] = nlohmann::json::array();
  for (const auto& c : candidates_.candidates) {
    j["candidates"].push_back({{"id", c.id}, {"text", c.text}});
  }
  j["provider_id"] = provider_->provider_id();
  j["history_window"] = history_window_;
  j["proj_dim"] = cfg_.proj_dim;
  j["similarity"] = cfg_.similarity == Similarity::dot ? "dot" : "cosine";
  j["mean_baseline"] = cfg_.mean_baseline;
  j["log_temperature"] = log_temperature_;
  const Eigen::VectorXd flat = flatten_parameters();
  j["parameters"] = std::vector<double>(flat.data(), flat.data() + flat.size());
  return j;
}

PromptPolicy PromptPolicy::from_json(const nlohmann::json& j,
                                     std::shared_ptr<const EmbeddingProvider> provider) {
  if (!provider) throw ConfigError("prompt policy: embedding provider must be set");
  if (j.at("provider_id").get<std::string>() != provider->provider_id()) {
    throw ConfigError("prompt policy checkpoint: embedding provider '" +
                      j.at("provider_id").get<std::string>() + "' does not match '" +
                      provider->provider_id() + "'");
  }
  CandidateSet set;
  set.task = j.value("task", "");
  for (const auto& entry : j.at("candidates")) {
    PromptCandidate c;
    c.id = entry.at("id").get<int>();
    c.text = entry.at("text").get<std::string>();
    c.embedding = provider->embed(c.text);
    set.candidates.push_back(std::move(c));
  }
  PromptPolicyConfig cfg;
  cfg.proj_dim = j.at("proj_dim").get<int>();
  cfg.similarity = j.at("similarity").get<std::string>() == "cosine" ? Similarity::cosine
                                                                     : Similarity::dot;
  cfg.mean_baseline = j.value("mean_baseline", true);
  PromptPolicy policy(std::move(set), std::move(provider), j.at("history_window").get<int>(),
                      cfg);
  const auto params = j.at("parameters").get<std::vector<double>>();
  policy.unflatten_parameters(
      Eigen::Map<const Eigen::VectorXd>(params.data(), static_cast<Eigen::Index>(params.size())));
  return policy;
}

}  // namespace bilevel
