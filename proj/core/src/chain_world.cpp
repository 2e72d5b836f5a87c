#include "bilevel/chain_world.hpp"

#include <cstdio>
#include <nlohmann/json.hpp>

#include "bilevel/errors.hpp"
#include "bilevel/rng.hpp"
#include "bilevel/text.hpp"

namespace bilevel {

namespace {

std::string format_reward(double r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", r);
  return buf;
}

}  // namespace

void ChainWorldConfig::validate() const {
  if (length < 3) throw ConfigError("chainworld: length must be >= 3, got " + std::to_string(length));
  if (step_cap < 1) throw ConfigError("chainworld: step_cap must be >= 1");
  if (end_reward_high <= end_reward_low) {
    throw ConfigError("chainworld: end_reward_high must exceed end_reward_low");
  }
}

ChainWorldConfig ChainWorldConfig::from_json(const nlohmann::json& j) {
  ChainWorldConfig cfg;
  cfg.length = j.value("length", cfg.length);
  cfg.partial = j.value("partial", cfg.partial);
  cfg.end_reward_high = j.value("end_reward_high", cfg.end_reward_high);
  cfg.end_reward_low = j.value("end_reward_low", cfg.end_reward_low);
  cfg.move_penalty = j.value("move_penalty", cfg.move_penalty);
  cfg.step_cap = j.value("step_cap", cfg.step_cap);
  cfg.validate();
  return cfg;
}

ChainWorld::ChainWorld(ChainWorldConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::string ChainWorld::id() const {
  return cfg_.partial ? "chainworld_partial" : "chainworld_full";
}

const std::vector<std::string>& ChainWorld::action_names() const { return action_names_; }

int ChainWorld::symbolic_dim() const { return cfg_.length + 2; }

Observation ChainWorld::reset(std::uint64_t seed) {
  Rng rng(seed);
  // Interior start: both ends are terminal.
  std::uniform_int_distribution<int> pos_dist(1, cfg_.length - 2);
  std::uniform_int_distribution<int> side_dist(0, 1);
  pos_ = pos_dist(rng);
  reward_left_ = side_dist(rng) == 0;
  steps_ = 0;
  done_ = false;
  return observe();
}

StepOutcome ChainWorld::step(int action) {
  if (done_) throw Error("chainworld: step() on a finished episode; call reset()");
  if (action != kLeft && action != kRight) {
    throw Error("chainworld: invalid action index " + std::to_string(action));
  }
  pos_ += action == kLeft ? -1 : 1;
  ++steps_;

  double reward = cfg_.move_penalty;
  if (pos_ == 0 || pos_ == cfg_.length - 1) {
    const bool at_left = pos_ == 0;
    reward = (at_left == reward_left_) ? cfg_.end_reward_high : cfg_.end_reward_low;
    done_ = true;
  } else if (steps_ >= cfg_.step_cap) {
    done_ = true;  // truncation: the move penalty stands
  }
  return {observe(), reward, done_};
}

std::string ChainWorld::situation() const {
  return reward_left_ ? "reward-left" : "reward-right";
}

std::string ChainWorld::render_text() const {
  std::string text = "Position " + std::to_string(pos_) + ".";
  if (!cfg_.partial) {
    // Name only the rewarded side, and keep the sentence short: the bag-of-
    // tokens embedding cannot represent word order, so mentioning both ends
    // would make the two situations identical, and every extra common word
    // dilutes the one signal that separates them. "The" is deliberately
    // absent — it appears in some candidate prompts but not others, so it
    // would skew the lexical similarities between unrelated pairs.
    const std::string side = reward_left_ ? "left" : "right";
    const std::string cap = reward_left_ ? "Left" : "Right";
    text += " Goal end: " + side + ". " + cap + " end pays " +
            format_reward(cfg_.end_reward_high) + ".";
  }
  text += " Each move costs " + format_reward(-cfg_.move_penalty) + ".";
  return text;
}

std::string ChainWorld::state_digest() const {
  return hex_digest(id() + "|" + std::to_string(pos_) + "|" + (reward_left_ ? "L" : "R") + "|" +
                    std::to_string(steps_));
}

Observation ChainWorld::observe() const {
  Observation obs;
  obs.text = render_text();
  obs.situation = situation();
  Eigen::VectorXd sym = Eigen::VectorXd::Zero(symbolic_dim());
  sym[pos_] = 1.0;
  if (!cfg_.partial) {
    sym[cfg_.length + (reward_left_ ? 0 : 1)] = 1.0;
  }
  obs.symbolic = std::move(sym);
  return obs;
}

std::vector<std::string> ChainWorld::enumerate_situations() const {
  return {"reward-left", "reward-right"};
}

std::pair<double, double> ChainWorld::return_bounds() const {
  // Nominal worst case: traverse the whole line and hit the penalty end.
  // Aimless episodes can fall below this; normalization clamps them to 0.
  const double lo = cfg_.end_reward_low + (cfg_.length - 1) * cfg_.move_penalty;
  return {lo, cfg_.end_reward_high};
}

std::string ChainWorld::task_description() const {
  return "There is a line with " + std::to_string(cfg_.length) + " positions, numbered 0 to " +
         std::to_string(cfg_.length - 1) +
         ". The agent starts at a position between the two ends and can move left or right. One "
         "end gives reward " +
         format_reward(cfg_.end_reward_high) + ", the other end gives reward " +
         format_reward(cfg_.end_reward_low) + ", and each move costs " +
         format_reward(-cfg_.move_penalty) +
         " point. Reaching either end finishes the episode.";
}

}  // namespace bilevel
