#pragma once

#include <array>
#include <nlohmann/json_fwd.hpp>

#include "bilevel/environment.hpp"

namespace bilevel {

/// Layout and rewards are config data. The grid is `size` x `size` with wall
/// lines at row and column size/2; `hallways` lists the wall cells that stay
/// open. Coordinates are [x, y] with x growing east and y growing north.
struct FourRoomConfig {
  int size = 9;
  std::vector<std::array<int, 2>> hallways{{4, 6}, {6, 4}, {4, 2}, {2, 4}};
  double step_penalty = -0.4;
  double invalid_penalty = -2.0;
  double goal_reward = 50.0;
  int step_cap = 100;

  void validate() const;  // throws ConfigError
  static FourRoomConfig from_json(const nlohmann::json& j);
};

/// Four rooms joined by one-cell hallways. Agent and goal spawn in uniformly
/// random room cells each episode; stepping onto the goal pays `goal_reward`
/// and ends the episode, bumping a wall or the border pays `invalid_penalty`
/// and leaves the agent in place, anything else pays `step_penalty`.
///
/// Rooms are numbered clockwise from the top-left: Room0 north-west, Room1
/// north-east, Room2 south-east, Room3 south-west. "Left-handed" from room R
/// means the clockwise neighbour R+1, "right-handed" the counter-clockwise
/// neighbour R-1; situations classify the goal's room relative to the
/// agent's, with the two-rooms-away case folded into left-handed.
class FourRoom final : public Environment {
 public:
  enum Action { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };

  explicit FourRoom(FourRoomConfig cfg = {});

  Observation reset(std::uint64_t seed) override;
  StepOutcome step(int action) override;

  std::string id() const override { return "fourroom"; }
  int num_actions() const override { return 4; }
  const std::vector<std::string>& action_names() const override;
  int symbolic_dim() const override { return 13; }

  bool done() const override { return done_; }
  std::string situation() const override;
  std::string render_text() const override;
  std::string state_digest() const override;

  std::vector<std::string> enumerate_situations() const override;
  std::pair<double, double> return_bounds() const override;
  std::string task_description() const override;

  // Geometry helpers, exposed for tests and analytic oracles.
  bool is_wall(int x, int y) const;
  /// Room index of a cell, or -1 for hallway cells.
  int room_of(int x, int y) const;
  std::array<int, 2> agent_position() const { return {ax_, ay_}; }
  std::array<int, 2> goal_position() const { return {gx_, gy_}; }
  /// Hallway cell leading from `room` to its clockwise neighbour.
  std::array<int, 2> left_hallway(int room) const;
  /// Hallway cell leading from `room` to its counter-clockwise neighbour.
  std::array<int, 2> right_hallway(int room) const;
  const FourRoomConfig& config() const { return cfg_; }

 private:
  Observation observe() const;

  FourRoomConfig cfg_;
  int ax_ = 0, ay_ = 0, gx_ = 0, gy_ = 0;
  int steps_ = 0;
  bool done_ = true;
  std::vector<std::string> action_names_{"north", "east", "south", "west"};
};

}  // namespace bilevel
