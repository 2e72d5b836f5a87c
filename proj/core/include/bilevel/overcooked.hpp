#pragma once

#include <array>
#include <nlohmann/json_fwd.hpp>
#include <optional>

#include "bilevel/environment.hpp"

namespace bilevel {

enum class Recipe { sliced_tomato, lettuce_tomato_salad };

/// Event bonuses paid once per matching progress milestone, plus the cost of
/// every step. Values follow the staged shaping of the delivery task.
struct OvercookedShaping {
  double fetch = 10.0;    // first pickup of each recipe ingredient
  double chop = 30.0;     // each recipe ingredient sliced
  double plate = 50.0;    // a plate first holds the complete recipe
  double deliver = 100.0; // the finished plate reaches the star
  double step = -0.5;     // every action
};

struct OvercookedConfig {
  Recipe recipe = Recipe::lettuce_tomato_salad;
  OvercookedShaping shaping;
  int step_cap = 100;
  std::optional<std::array<int, 2>> agent_start;  // fixed start for tests

  void validate() const;  // throws ConfigError
  static OvercookedConfig from_json(const nlohmann::json& j);
};

/// A 7x7 kitchen. Border cells are counters; the fixed layout places a
/// tomato, a lettuce, two cutboards, two plates and a delivery star on them,
/// and the agent walks the 5x5 interior. Moving into an item's cell performs
/// the interaction implied by what the agent holds and what sits there:
/// pick up raw food, place food on an empty cutboard, slice the raw food on a
/// board (empty-handed), pick up the sliced food, plate it, pick up a plate
/// holding the complete recipe, deliver at the star. Progress is monotone:
/// food never un-slices and a completed plate stays completed.
class Overcooked final : public Environment {
 public:
  enum Action { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };

  explicit Overcooked(OvercookedConfig cfg = {});

  Observation reset(std::uint64_t seed) override;
  StepOutcome step(int action) override;

  std::string id() const override;
  int num_actions() const override { return 4; }
  const std::vector<std::string>& action_names() const override;
  int symbolic_dim() const override { return 11; }

  bool done() const override { return done_; }
  std::string situation() const override;
  std::string render_text() const override;
  std::string state_digest() const override;

  std::vector<std::string> enumerate_situations() const override;
  std::pair<double, double> return_bounds() const override;
  std::string task_description() const override;

  // Progress access for tests.
  bool tomato_sliced() const { return tomato_.sliced; }
  bool lettuce_sliced() const { return lettuce_.sliced; }
  bool plated() const;
  bool delivered() const { return delivered_; }
  std::array<int, 2> agent_position() const { return {ax_, ay_}; }
  const OvercookedConfig& config() const { return cfg_; }

  static constexpr int kSize = 7;
  static constexpr std::array<int, 2> kTomatoCell{2, 6};
  static constexpr std::array<int, 2> kLettuceCell{4, 6};
  static constexpr std::array<int, 2> kBoardCell[2] = {{0, 4}, {0, 2}};
  static constexpr std::array<int, 2> kPlateCell[2] = {{6, 4}, {6, 2}};
  static constexpr std::array<int, 2> kStarCell{3, 0};

 private:
  enum class FoodLoc { counter, board0, board1, plate0, plate1, held };
  struct Food {
    FoodLoc loc = FoodLoc::counter;
    bool sliced = false;
  };
  enum class Held { none, tomato, lettuce, plate0, plate1 };

  Observation observe() const;
  double interact(int tx, int ty);
  bool plate_complete(int plate) const;
  bool recipe_needs_lettuce() const { return cfg_.recipe == Recipe::lettuce_tomato_salad; }
  Food& food(int idx) { return idx == 0 ? tomato_ : lettuce_; }
  const Food& food(int idx) const { return idx == 0 ? tomato_ : lettuce_; }

  OvercookedConfig cfg_;
  Food tomato_, lettuce_;
  Held held_ = Held::none;
  bool fetch_paid_[2] = {false, false};  // tomato, lettuce
  bool chop_paid_[2] = {false, false};
  bool plate_paid_ = false;
  bool delivered_ = false;
  int ax_ = 3, ay_ = 3;
  int steps_ = 0;
  bool done_ = true;
  std::vector<std::string> action_names_{"north", "east", "south", "west"};
};

}  // namespace bilevel
