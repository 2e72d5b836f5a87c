#include "bilevel/four_room.hpp"

#include <algorithm>
#include <cstdio>
#include <nlohmann/json.hpp>

#include "bilevel/errors.hpp"
#include "bilevel/rng.hpp"
#include "bilevel/text.hpp"

namespace bilevel {

namespace {

std::string coord(int x, int y) {
  return "[" + std::to_string(x) + ", " + std::to_string(y) + "]";
}

std::string format_reward(double r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", r);
  return buf;
}

}  // namespace

void FourRoomConfig::validate() const {
  if (size < 5 || size % 2 == 0) {
    throw ConfigError("fourroom: size must be odd and >= 5, got " + std::to_string(size));
  }
  if (step_cap < 1) throw ConfigError("fourroom: step_cap must be >= 1");
  const int mid = size / 2;
  bool segment_seen[4] = {false, false, false, false};
  for (const auto& h : hallways) {
    const int x = h[0], y = h[1];
    if (x < 0 || x >= size || y < 0 || y >= size) {
      throw ConfigError("fourroom: hallway " + coord(x, y) + " outside the grid");
    }
    const bool on_wall = (x == mid) != (y == mid);  // wall line, not the center
    if (!on_wall) {
      throw ConfigError("fourroom: hallway " + coord(x, y) + " is not on a wall segment");
    }
    int segment;
    if (x == mid) {
      segment = y > mid ? 0 : 2;  // Room0-Room1 : Room2-Room3
    } else {
      segment = x > mid ? 1 : 3;  // Room1-Room2 : Room3-Room0
    }
    if (segment_seen[segment]) {
      throw ConfigError("fourroom: two hallways on one wall segment");
    }
    segment_seen[segment] = true;
  }
  if (!std::all_of(std::begin(segment_seen), std::end(segment_seen), [](bool b) { return b; })) {
    throw ConfigError("fourroom: every wall segment needs exactly one hallway");
  }
}

FourRoomConfig FourRoomConfig::from_json(const nlohmann::json& j) {
  FourRoomConfig cfg;
  cfg.size = j.value("size", cfg.size);
  if (j.contains("hallways")) {
    cfg.hallways.clear();
    for (const auto& h : j.at("hallways")) {
      cfg.hallways.push_back({h.at(0).get<int>(), h.at(1).get<int>()});
    }
  }
  cfg.step_penalty = j.value("step_penalty", cfg.step_penalty);
  cfg.invalid_penalty = j.value("invalid_penalty", cfg.invalid_penalty);
  cfg.goal_reward = j.value("goal_reward", cfg.goal_reward);
  cfg.step_cap = j.value("step_cap", cfg.step_cap);
  cfg.validate();
  return cfg;
}

FourRoom::FourRoom(FourRoomConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

const std::vector<std::string>& FourRoom::action_names() const { return action_names_; }

bool FourRoom::is_wall(int x, int y) const {
  const int mid = cfg_.size / 2;
  if (x != mid && y != mid) return false;
  for (const auto& h : cfg_.hallways) {
    if (h[0] == x && h[1] == y) return false;
  }
  return true;
}

int FourRoom::room_of(int x, int y) const {
  const int mid = cfg_.size / 2;
  if (x == mid || y == mid) return -1;  // hallway (walls are not standable)
  if (y > mid) return x < mid ? 0 : 1;
  return x < mid ? 3 : 2;
}

std::array<int, 2> FourRoom::left_hallway(int room) const {
  const int mid = cfg_.size / 2;
  // Wall segment between `room` and its clockwise neighbour room+1.
  for (const auto& h : cfg_.hallways) {
    const int x = h[0], y = h[1];
    int segment;
    if (x == mid) {
      segment = y > mid ? 0 : 2;
    } else {
      segment = x > mid ? 1 : 3;
    }
    if (segment == room) return h;
  }
  throw Error("fourroom: no hallway for room " + std::to_string(room));
}

std::array<int, 2> FourRoom::right_hallway(int room) const {
  return left_hallway((room + 3) % 4);
}

Observation FourRoom::reset(std::uint64_t seed) {
  Rng rng(seed);
  // Room cells in a fixed scan order so placement depends on the seed only.
  std::vector<std::array<int, 2>> cells;
  for (int x = 0; x < cfg_.size; ++x) {
    for (int y = 0; y < cfg_.size; ++y) {
      if (room_of(x, y) >= 0) cells.push_back({x, y});
    }
  }
  std::uniform_int_distribution<std::size_t> dist(0, cells.size() - 1);
  const auto agent = cells[dist(rng)];
  ax_ = agent[0];
  ay_ = agent[1];
  std::array<int, 2> goal = agent;
  while (goal == agent) {
    goal = cells[dist(rng)];
  }
  gx_ = goal[0];
  gy_ = goal[1];
  steps_ = 0;
  done_ = false;
  return observe();
}

StepOutcome FourRoom::step(int action) {
  if (done_) throw Error("fourroom: step() on a finished episode; call reset()");
  if (action < 0 || action >= 4) {
    throw Error("fourroom: invalid action index " + std::to_string(action));
  }
  static constexpr int kDx[4] = {0, 1, 0, -1};
  static constexpr int kDy[4] = {1, 0, -1, 0};
  const int nx = ax_ + kDx[action];
  const int ny = ay_ + kDy[action];
  ++steps_;

  double reward;
  const bool blocked =
      nx < 0 || nx >= cfg_.size || ny < 0 || ny >= cfg_.size || is_wall(nx, ny);
  if (blocked) {
    reward = cfg_.invalid_penalty;
  } else {
    ax_ = nx;
    ay_ = ny;
    if (ax_ == gx_ && ay_ == gy_) {
      reward = cfg_.goal_reward;
      done_ = true;
    } else {
      reward = cfg_.step_penalty;
    }
  }
  if (!done_ && steps_ >= cfg_.step_cap) done_ = true;
  return {observe(), reward, done_};
}

std::string FourRoom::situation() const {
  const int agent_room = room_of(ax_, ay_);
  const int goal_room = room_of(gx_, gy_);
  if (agent_room < 0) return "in-hallway";
  if (agent_room == goal_room) return "same-room";
  const int diff = ((goal_room - agent_room) % 4 + 4) % 4;
  // Two rooms away is the same distance either way; fold it into left-handed.
  return diff == 3 ? "goal-right-handed" : "goal-left-handed";
}

std::string FourRoom::render_text() const {
  const int agent_room = room_of(ax_, ay_);
  const int goal_room = room_of(gx_, gy_);
  std::string text;
  if (agent_room >= 0) {
    const auto lh = left_hallway(agent_room);
    const auto rh = right_hallway(agent_room);
    text = "You are in Room" + std::to_string(agent_room) + ", goal is in Room" +
           std::to_string(goal_room) + ". The left-handed hallway's position is " +
           coord(lh[0], lh[1]) + ". The right-handed hallway's position is " +
           coord(rh[0], rh[1]) + ".";
  } else {
    // A hallway cell joins clockwise-adjacent rooms; name them in that order.
    const int mid = cfg_.size / 2;
    int room_a;
    if (ax_ == mid) {
      room_a = ay_ > mid ? 0 : 2;
    } else {
      room_a = ax_ > mid ? 1 : 3;
    }
    text = "You are in the hallway between Room" + std::to_string(room_a) + " and Room" +
           std::to_string((room_a + 1) % 4) + ", goal is in Room" + std::to_string(goal_room) +
           ".";
  }
  text += " Your position is " + coord(ax_, ay_) + ". The goal's position is " +
          coord(gx_, gy_) + ".";
  return text;
}

std::string FourRoom::state_digest() const {
  return hex_digest(id() + "|" + std::to_string(ax_) + "," + std::to_string(ay_) + "|" +
                    std::to_string(gx_) + "," + std::to_string(gy_) + "|" +
                    std::to_string(steps_));
}

Observation FourRoom::observe() const {
  Observation obs;
  obs.text = render_text();
  obs.situation = situation();
  Eigen::VectorXd sym = Eigen::VectorXd::Zero(symbolic_dim());
  const double denom = cfg_.size - 1;
  sym[0] = ax_ / denom;
  sym[1] = ay_ / denom;
  sym[2] = gx_ / denom;
  sym[3] = gy_ / denom;
  const int agent_room = room_of(ax_, ay_);
  sym[4 + (agent_room < 0 ? 4 : agent_room)] = 1.0;  // 5 slots: rooms + hallway
  const int goal_room = room_of(gx_, gy_);
  if (goal_room >= 0) sym[9 + goal_room] = 1.0;
  obs.symbolic = std::move(sym);
  return obs;
}

std::vector<std::string> FourRoom::enumerate_situations() const {
  return {"same-room", "goal-left-handed", "goal-right-handed", "in-hallway"};
}

std::pair<double, double> FourRoom::return_bounds() const {
  return {cfg_.step_cap * cfg_.invalid_penalty, cfg_.goal_reward};
}

std::string FourRoom::task_description() const {
  return "There are four rooms connected by four hallways. The goal is randomly placed in one of "
         "the four rooms and the agent, also placed in a random room, must reach the goal as "
         "quickly as possible. The agent can only move between rooms through the hallways. "
         "Reaching the goal gives reward " +
         format_reward(cfg_.goal_reward) + ", bumping into a wall costs " +
         format_reward(-cfg_.invalid_penalty) + ", and every other step costs " +
         format_reward(-cfg_.step_penalty) + ".";
}

}  // namespace bilevel
