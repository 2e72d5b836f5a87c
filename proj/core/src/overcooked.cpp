#include "bilevel/overcooked.hpp"

#include <nlohmann/json.hpp>

#include "bilevel/errors.hpp"
#include "bilevel/rng.hpp"
#include "bilevel/text.hpp"

namespace bilevel {

namespace {

std::string coord(const std::array<int, 2>& c) {
  return "[" + std::to_string(c[0]) + ", " + std::to_string(c[1]) + "]";
}

bool interior(int x, int y) { return x >= 1 && x <= 5 && y >= 1 && y <= 5; }

}  // namespace

void OvercookedConfig::validate() const {
  if (step_cap < 1) throw ConfigError("overcooked: step_cap must be >= 1");
  if (agent_start) {
    if (!interior((*agent_start)[0], (*agent_start)[1])) {
      throw ConfigError("overcooked: agent_start must be an interior cell");
    }
  }
}

OvercookedConfig OvercookedConfig::from_json(const nlohmann::json& j) {
  OvercookedConfig cfg;
  if (j.contains("recipe")) {
    const std::string r = j.at("recipe").get<std::string>();
    if (r == "sliced_tomato") {
      cfg.recipe = Recipe::sliced_tomato;
    } else if (r == "lettuce_tomato_salad") {
      cfg.recipe = Recipe::lettuce_tomato_salad;
    } else {
      throw ConfigError("overcooked: unknown recipe '" + r + "'");
    }
  }
  if (j.contains("shaping")) {
    const auto& s = j.at("shaping");
    cfg.shaping.fetch = s.value("fetch", cfg.shaping.fetch);
    cfg.shaping.chop = s.value("chop", cfg.shaping.chop);
    cfg.shaping.plate = s.value("plate", cfg.shaping.plate);
    cfg.shaping.deliver = s.value("deliver", cfg.shaping.deliver);
    cfg.shaping.step = s.value("step", cfg.shaping.step);
  }
  cfg.step_cap = j.value("step_cap", cfg.step_cap);
  if (j.contains("agent_start")) {
    const auto& a = j.at("agent_start");
    cfg.agent_start = std::array<int, 2>{a.at(0).get<int>(), a.at(1).get<int>()};
  }
  cfg.validate();
  return cfg;
}

Overcooked::Overcooked(OvercookedConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::string Overcooked::id() const {
  return cfg_.recipe == Recipe::sliced_tomato ? "overcooked_tomato" : "overcooked_salad";
}

const std::vector<std::string>& Overcooked::action_names() const { return action_names_; }

Observation Overcooked::reset(std::uint64_t seed) {
  tomato_ = Food{};
  lettuce_ = Food{};
  held_ = Held::none;
  fetch_paid_[0] = fetch_paid_[1] = false;
  chop_paid_[0] = chop_paid_[1] = false;
  plate_paid_ = false;
  delivered_ = false;
  steps_ = 0;
  done_ = false;
  if (cfg_.agent_start) {
    ax_ = (*cfg_.agent_start)[0];
    ay_ = (*cfg_.agent_start)[1];
  } else {
    Rng rng(seed);
    std::uniform_int_distribution<int> cell(1, 5);
    ax_ = cell(rng);
    ay_ = cell(rng);
  }
  return observe();
}

bool Overcooked::plate_complete(int plate) const {
  const FoodLoc slot = plate == 0 ? FoodLoc::plate0 : FoodLoc::plate1;
  const bool tomato_ok = tomato_.loc == slot && tomato_.sliced;
  const bool lettuce_here = lettuce_.loc == slot;
  if (recipe_needs_lettuce()) {
    return tomato_ok && lettuce_here && lettuce_.sliced;
  }
  // A single-ingredient recipe rejects plates carrying extras.
  return tomato_ok && !lettuce_here;
}

bool Overcooked::plated() const { return plate_complete(0) || plate_complete(1); }

double Overcooked::interact(int tx, int ty) {
  const bool in_recipe[2] = {true, recipe_needs_lettuce()};  // tomato, lettuce

  // Food counters: pick up whatever still sits there.
  for (int idx = 0; idx < 2; ++idx) {
    const auto& cell = idx == 0 ? kTomatoCell : kLettuceCell;
    if (tx != cell[0] || ty != cell[1]) continue;
    if (held_ == Held::none && food(idx).loc == FoodLoc::counter) {
      food(idx).loc = FoodLoc::held;
      held_ = idx == 0 ? Held::tomato : Held::lettuce;
      if (in_recipe[idx] && !fetch_paid_[idx]) {
        fetch_paid_[idx] = true;
        return cfg_.shaping.fetch;
      }
    }
    return 0.0;
  }

  for (int b = 0; b < 2; ++b) {
    if (tx != kBoardCell[b][0] || ty != kBoardCell[b][1]) continue;
    const FoodLoc slot = b == 0 ? FoodLoc::board0 : FoodLoc::board1;
    int on_board = -1;
    for (int idx = 0; idx < 2; ++idx) {
      if (food(idx).loc == slot) on_board = idx;
    }
    if (held_ == Held::tomato || held_ == Held::lettuce) {
      if (on_board < 0) {
        const int idx = held_ == Held::tomato ? 0 : 1;
        food(idx).loc = slot;
        held_ = Held::none;
      }
    } else if (held_ == Held::none && on_board >= 0) {
      if (!food(on_board).sliced) {
        food(on_board).sliced = true;
        if (in_recipe[on_board] && !chop_paid_[on_board]) {
          chop_paid_[on_board] = true;
          return cfg_.shaping.chop;
        }
      } else {
        food(on_board).loc = FoodLoc::held;
        held_ = on_board == 0 ? Held::tomato : Held::lettuce;
      }
    }
    return 0.0;
  }

  for (int p = 0; p < 2; ++p) {
    if (tx != kPlateCell[p][0] || ty != kPlateCell[p][1]) continue;
    const FoodLoc slot = p == 0 ? FoodLoc::plate0 : FoodLoc::plate1;
    if (held_ == Held::tomato || held_ == Held::lettuce) {
      const int idx = held_ == Held::tomato ? 0 : 1;
      if (food(idx).sliced) {  // only sliced food is platable
        food(idx).loc = slot;
        held_ = Held::none;
        if (plate_complete(p) && !plate_paid_) {
          plate_paid_ = true;
          return cfg_.shaping.plate;
        }
      }
    } else if (held_ == Held::none && plate_complete(p)) {
      held_ = p == 0 ? Held::plate0 : Held::plate1;
    }
    return 0.0;
  }

  if (tx == kStarCell[0] && ty == kStarCell[1]) {
    if (held_ == Held::plate0 || held_ == Held::plate1) {
      const int p = held_ == Held::plate0 ? 0 : 1;
      if (plate_complete(p)) {
        delivered_ = true;
        done_ = true;
        return cfg_.shaping.deliver;
      }
    }
    return 0.0;
  }

  return 0.0;  // plain counter
}

StepOutcome Overcooked::step(int action) {
  if (done_) throw Error("overcooked: step() on a finished episode; call reset()");
  if (action < 0 || action >= 4) {
    throw Error("overcooked: invalid action index " + std::to_string(action));
  }
  static constexpr int kDx[4] = {0, 1, 0, -1};
  static constexpr int kDy[4] = {1, 0, -1, 0};
  const int nx = ax_ + kDx[action];
  const int ny = ay_ + kDy[action];
  ++steps_;

  double reward = cfg_.shaping.step;
  if (interior(nx, ny)) {
    ax_ = nx;
    ay_ = ny;
  } else {
    reward += interact(nx, ny);
  }
  if (!done_ && steps_ >= cfg_.step_cap) done_ = true;
  return {observe(), reward, done_};
}

std::string Overcooked::situation() const {
  std::string held;
  switch (held_) {
    case Held::none:
      held = "hand-none";
      break;
    case Held::tomato:
      held = tomato_.sliced ? "hand-sliced" : "hand-raw";
      break;
    case Held::lettuce:
      held = lettuce_.sliced ? "hand-sliced" : "hand-raw";
      break;
    default:
      held = "hand-plate";
  }
  return std::string(lettuce_.sliced ? "lettuce-sliced" : "lettuce-raw") + "|" +
         (tomato_.sliced ? "tomato-sliced" : "tomato-raw") + "|" +
         (plated() ? "plated" : "unplated") + "|" + held;
}

std::string Overcooked::render_text() const {
  const std::array<int, 2> food_cells[2] = {kTomatoCell, kLettuceCell};
  auto food_cell = [&](int idx) -> std::array<int, 2> {
    switch (food(idx).loc) {
      case FoodLoc::counter:
        return food_cells[idx];
      case FoodLoc::board0:
        return kBoardCell[0];
      case FoodLoc::board1:
        return kBoardCell[1];
      case FoodLoc::plate0:
        return kPlateCell[0];
      default:
        return kPlateCell[1];
    }
  };
  auto food_name = [&](int idx) {
    return std::string(food(idx).sliced ? "sliced " : "") + (idx == 0 ? "tomato" : "lettuce");
  };

  // A completed salad reads as one item; its plate keeps its own entry.
  int salad_plate = -1;
  if (recipe_needs_lettuce()) {
    for (int p = 0; p < 2; ++p) {
      if (plate_complete(p)) salad_plate = p;
    }
  }

  std::vector<std::pair<std::string, std::array<int, 2>>> items;
  for (int idx = 0; idx < 2; ++idx) {
    if (food(idx).loc == FoodLoc::held) continue;
    const bool merged = salad_plate >= 0 &&
                        food(idx).loc == (salad_plate == 0 ? FoodLoc::plate0 : FoodLoc::plate1);
    if (!merged) items.emplace_back(food_name(idx), food_cell(idx));
  }
  items.emplace_back("cutboard0", kBoardCell[0]);
  items.emplace_back("cutboard1", kBoardCell[1]);
  for (int p = 0; p < 2; ++p) {
    if (held_ == (p == 0 ? Held::plate0 : Held::plate1)) continue;
    items.emplace_back("plate" + std::to_string(p), kPlateCell[p]);
    if (salad_plate == p) items.emplace_back("lettuce-tomato salad", kPlateCell[p]);
  }
  items.emplace_back("star", kStarCell);

  std::string text = "Currently in the kitchen there are the following items and their location:";
  for (const auto& [name, cell] : items) {
    text += " Name: " + name + ", Location: " + coord(cell) + ";";
  }
  text.back() = '.';

  text += " agent1 is at location " + coord({ax_, ay_}) + " and currently holds ";
  switch (held_) {
    case Held::none:
      text += "nothing.";
      break;
    case Held::tomato:
      text += "a " + food_name(0) + ".";
      break;
    case Held::lettuce:
      text += "a " + food_name(1) + ".";
      break;
    case Held::plate0:
    case Held::plate1: {
      const int p = held_ == Held::plate0 ? 0 : 1;
      text += "plate" + std::to_string(p) + " with ";
      if (recipe_needs_lettuce()) {
        text += "a lettuce-tomato salad.";
      } else {
        text += "a sliced tomato.";
      }
      break;
    }
  }
  return text;
}

std::string Overcooked::state_digest() const {
  auto food_code = [](const Food& f) {
    return std::to_string(static_cast<int>(f.loc)) + (f.sliced ? "s" : "r");
  };
  return hex_digest(id() + "|" + std::to_string(ax_) + "," + std::to_string(ay_) + "|" +
                    food_code(tomato_) + "|" + food_code(lettuce_) + "|" +
                    std::to_string(static_cast<int>(held_)) + "|" +
                    (plate_paid_ ? "P" : "-") + (delivered_ ? "D" : "-") + "|" +
                    std::to_string(steps_));
}

Observation Overcooked::observe() const {
  Observation obs;
  obs.text = render_text();
  obs.situation = situation();
  Eigen::VectorXd sym = Eigen::VectorXd::Zero(symbolic_dim());
  sym[0] = ax_ / 6.0;
  sym[1] = ay_ / 6.0;
  int held_slot = 0;
  switch (held_) {
    case Held::none:
      held_slot = 0;
      break;
    case Held::tomato:
      held_slot = tomato_.sliced ? 2 : 1;
      break;
    case Held::lettuce:
      held_slot = lettuce_.sliced ? 4 : 3;
      break;
    default:
      held_slot = 5;
  }
  sym[2 + held_slot] = 1.0;
  sym[8] = tomato_.sliced ? 1.0 : 0.0;
  sym[9] = lettuce_.sliced ? 1.0 : 0.0;
  sym[10] = plated() ? 1.0 : 0.0;
  obs.symbolic = std::move(sym);
  return obs;
}

std::vector<std::string> Overcooked::enumerate_situations() const {
  std::vector<std::string> out;
  for (const char* l : {"lettuce-raw", "lettuce-sliced"}) {
    for (const char* t : {"tomato-raw", "tomato-sliced"}) {
      for (const char* p : {"unplated", "plated"}) {
        for (const char* h : {"hand-none", "hand-raw", "hand-sliced", "hand-plate"}) {
          out.push_back(std::string(l) + "|" + t + "|" + p + "|" + h);
        }
      }
    }
  }
  return out;
}

std::pair<double, double> Overcooked::return_bounds() const {
  const int ingredients = recipe_needs_lettuce() ? 2 : 1;
  const double hi = ingredients * (cfg_.shaping.fetch + cfg_.shaping.chop) + cfg_.shaping.plate +
                    cfg_.shaping.deliver;
  return {cfg_.step_cap * cfg_.shaping.step, hi};
}

std::string Overcooked::task_description() const {
  std::string meal = recipe_needs_lettuce() ? "a lettuce-tomato salad (sliced lettuce and sliced "
                                              "tomato on one plate)"
                                            : "a sliced tomato on a plate";
  return "You are agent1 in a kitchen. The kitchen has a tomato, a lettuce, two cutboards "
         "(cutboard0 and cutboard1), two plates (plate0 and plate1) and a delivery star on the "
         "counters around a walkable area. To prepare food: fetch a raw food, put it onto a "
         "cutboard, and slice it on the cutboard. To serve: put the sliced food onto a plate, "
         "pick up the completed plate, and bring it to the star. Your task is to deliver " +
         meal + ".";
}

}  // namespace bilevel
