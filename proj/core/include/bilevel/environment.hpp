#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace bilevel {

/// One step observation handed to the policies. `text` is the canonical
/// natural-language rendering; `symbolic` is a compact numeric encoding of the
/// same state; `situation` is the coarse abstraction used to key thought
/// caches (it may expose latent state the text deliberately hides).
struct Observation {
  std::string text;
  std::optional<Eigen::VectorXd> symbolic;
  std::string situation;
};

struct StepOutcome {
  Observation observation;
  double reward = 0.0;
  bool done = false;
};

/// Episodic task with a textual rendering and a small discrete action set.
/// Instances are single-threaded state machines: `reset` starts an episode,
/// `step` advances it, and stepping a finished episode is an error. Run one
/// instance per execution context when collecting episodes in parallel.
class Environment {
 public:
  virtual ~Environment() = default;

  /// Starts a new episode. Equal seeds yield identical initial states.
  virtual Observation reset(std::uint64_t seed) = 0;

  /// Applies an action index in [0, num_actions). Throws Error if the index
  /// is out of range or the episode already finished.
  virtual StepOutcome step(int action) = 0;

  virtual std::string id() const = 0;
  virtual int num_actions() const = 0;
  virtual const std::vector<std::string>& action_names() const = 0;
  virtual int symbolic_dim() const = 0;

  /// Views of the current state (the latest Observation was built from them).
  virtual bool done() const = 0;
  virtual std::string situation() const = 0;
  virtual std::string render_text() const = 0;
  virtual std::string state_digest() const = 0;

  /// Every situation key this environment can produce, in a fixed order.
  /// Used to enumerate (situation, prompt) pairs when prefilling caches.
  virtual std::vector<std::string> enumerate_situations() const = 0;

  /// Analytic [min, max] bounds on the undiscounted episode return, used to
  /// normalize raw returns into [0, 1] for cross-method comparison.
  virtual std::pair<double, double> return_bounds() const = 0;

  /// Natural-language summary of the task, prepended when composing queries
  /// for a remote reasoner and when auto-generating prompt candidates.
  virtual std::string task_description() const = 0;
};

/// Builds an environment from its config section. Requires an "id" field of
/// "chainworld_full" | "chainworld_partial" | "fourroom" | "overcooked";
/// remaining fields are environment-specific overrides.
std::unique_ptr<Environment> make_environment(const nlohmann::json& env_config);

}  // namespace bilevel
