#pragma once

#include <nlohmann/json_fwd.hpp>

#include "bilevel/environment.hpp"

namespace bilevel {

struct ChainWorldConfig {
  int length = 10;            // positions 0 .. length-1
  bool partial = false;       // hide the rewarded side from the text
  double end_reward_high = 100.0;
  double end_reward_low = -5.0;
  double move_penalty = -1.0;
  int step_cap = 100;

  void validate() const;  // throws ConfigError
  static ChainWorldConfig from_json(const nlohmann::json& j);
};

/// A line of `length` positions. One end pays `end_reward_high`, the other
/// `end_reward_low`; which is which is drawn per episode. Every move costs
/// `move_penalty`, reaching either end terminates. The full variant names the
/// rewarded end in the observation text; the partial variant hides it (the
/// situation key still carries it, since a reasoner keyed on situations must
/// be able to tell episodes apart even when the agent cannot).
class ChainWorld final : public Environment {
 public:
  static constexpr int kLeft = 0;
  static constexpr int kRight = 1;

  explicit ChainWorld(ChainWorldConfig cfg = {});

  Observation reset(std::uint64_t seed) override;
  StepOutcome step(int action) override;

  std::string id() const override;
  int num_actions() const override { return 2; }
  const std::vector<std::string>& action_names() const override;
  int symbolic_dim() const override;

  bool done() const override { return done_; }
  std::string situation() const override;
  std::string render_text() const override;
  std::string state_digest() const override;

  std::vector<std::string> enumerate_situations() const override;
  std::pair<double, double> return_bounds() const override;
  std::string task_description() const override;

  // State access for tests and analytic oracles.
  int position() const { return pos_; }
  bool reward_on_left() const { return reward_left_; }
  const ChainWorldConfig& config() const { return cfg_; }

 private:
  Observation observe() const;

  ChainWorldConfig cfg_;
  int pos_ = 1;
  bool reward_left_ = false;
  int steps_ = 0;
  bool done_ = true;  // step() before reset() is rejected
  std::vector<std::string> action_names_{"left", "right"};
};

}  // namespace bilevel
