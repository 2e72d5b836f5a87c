#pragma once

#include <Eigen/Core>
#include <vector>

#include "bilevel/cot.hpp"
#include "bilevel/environment.hpp"

namespace bilevel {

/// Everything recorded at one step of one episode. Both policy updates read
/// these: the prompt-policy update uses (history_embedding, prompt_id,
/// entropy | reward), the action-policy update uses (policy_input, action,
/// action_log_prob, value, reward, done).
struct TransitionRecord {
  Observation obs;
  Observation next_obs;

  int prompt_id = -1;
  double prompt_log_prob = 0.0;
  Thought thought;

  int action = -1;
  double action_log_prob = 0.0;
  double reward = 0.0;   // environment reward for this step
  double entropy = 0.0;  // action-distribution entropy at this step, >= 0
  bool done = false;
  double value = 0.0;    // critic estimate at this step

  Eigen::VectorXd history_embedding;    // prompt-policy input
  Eigen::VectorXd policy_input;         // action-policy input
  Eigen::VectorXd action_distribution;  // full distribution the action came from
};

/// One episode, in step order.
using Trajectory = std::vector<TransitionRecord>;

}  // namespace bilevel
