#include <benchmark/benchmark.h>

#include "bilevel/action_policy.hpp"
#include "bilevel/embedding.hpp"
#include "bilevel/environment.hpp"
#include "bilevel/mlp.hpp"
#include "bilevel/rng.hpp"

#include <nlohmann/json.hpp>

namespace {

void bm_chainworld_step(benchmark::State& state) {
  auto env = bilevel::make_environment({{"id", "chainworld_full"}});
  bilevel::Rng rng(7);
  env->reset(1);
  std::uint64_t seed = 2;
  for (auto _ : state) {
    if (env->done()) env->reset(seed++);
    benchmark::DoNotOptimize(env->step(static_cast<int>(rng() % 2)));
  }
}
BENCHMARK(bm_chainworld_step);

void bm_fourroom_step(benchmark::State& state) {
  auto env = bilevel::make_environment({{"id", "fourroom"}});
  bilevel::Rng rng(7);
  env->reset(1);
  std::uint64_t seed = 2;
  for (auto _ : state) {
    if (env->done()) env->reset(seed++);
    benchmark::DoNotOptimize(env->step(static_cast<int>(rng() % 4)));
  }
}
BENCHMARK(bm_fourroom_step);

void bm_hash_embed(benchmark::State& state) {
  const bilevel::HashEmbeddingProvider provider(256);
  const std::string text =
      "You are in Room1, goal is in Room3. The left-handed hallway's position is [6, 4]. "
      "Your position is [2, 6]. The goal's position is [7, 1].";
  for (auto _ : state) benchmark::DoNotOptimize(provider.embed(text));
}
BENCHMARK(bm_hash_embed);

void bm_policy_act(benchmark::State& state) {
  bilevel::ActionPolicyConfig cfg;
  cfg.input_dim = 512;
  cfg.num_actions = 4;
  bilevel::ActionPolicy policy(cfg);
  bilevel::Rng rng(3);
  const Eigen::VectorXd input = Eigen::VectorXd::Random(512);
  for (auto _ : state) benchmark::DoNotOptimize(policy.act(input, rng));
}
BENCHMARK(bm_policy_act);

void bm_ppo_update(benchmark::State& state) {
  bilevel::ActionPolicyConfig cfg;
  cfg.input_dim = 32;
  cfg.num_actions = 4;
  bilevel::ActionPolicy policy(cfg);
  bilevel::Rng rng(3);

  // A synthetic 8-episode batch of 25 steps each.
  std::vector<bilevel::Trajectory> batch;
  for (int e = 0; e < 8; ++e) {
    bilevel::Trajectory traj;
    for (int t = 0; t < 25; ++t) {
      bilevel::TransitionRecord rec;
      rec.policy_input = Eigen::VectorXd::Random(32);
      const auto d = policy.act(rec.policy_input, rng);
      rec.action = d.action;
      rec.action_log_prob = d.log_prob;
      rec.value = d.value;
      rec.entropy = d.entropy;
      rec.reward = (t == 24) ? 1.0 : -0.1;
      rec.done = t == 24;
      traj.push_back(std::move(rec));
    }
    batch.push_back(std::move(traj));
  }

  bilevel::PpoConfig ppo;
  for (auto _ : state) {
    benchmark::DoNotOptimize(policy.ppo_update(batch, ppo, rng));
  }
}
BENCHMARK(bm_ppo_update);

}  // namespace

BENCHMARK_MAIN();
