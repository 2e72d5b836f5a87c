#include "bilevel/environment.hpp"

#include <nlohmann/json.hpp>

#include "bilevel/chain_world.hpp"
#include "bilevel/errors.hpp"
#include "bilevel/four_room.hpp"
#include "bilevel/overcooked.hpp"

namespace bilevel {

std::unique_ptr<Environment> make_environment(const nlohmann::json& env_config) {
  if (!env_config.contains("id")) {
    throw ConfigError("env config needs an \"id\" field");
  }
  const std::string id = env_config.at("id").get<std::string>();
  if (id == "chainworld_full" || id == "chainworld_partial") {
    auto cfg = ChainWorldConfig::from_json(env_config);
    cfg.partial = id == "chainworld_partial";
    return std::make_unique<ChainWorld>(cfg);
  }
  if (id == "fourroom") {
    return std::make_unique<FourRoom>(FourRoomConfig::from_json(env_config));
  }
  if (id == "overcooked" || id == "overcooked_salad" || id == "overcooked_tomato") {
    auto cfg = OvercookedConfig::from_json(env_config);
    if (id == "overcooked_salad") cfg.recipe = Recipe::lettuce_tomato_salad;
    if (id == "overcooked_tomato") cfg.recipe = Recipe::sliced_tomato;
    return std::make_unique<Overcooked>(cfg);
  }
  throw ConfigError("unknown environment id '" + id + "'");
}

}  // namespace bilevel
