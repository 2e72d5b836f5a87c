#include "bilevel/cot.hpp"

#include <cctype>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string_view>

#include "bilevel/errors.hpp"
#include "bilevel/text.hpp"
#include "http_client.hpp"

namespace bilevel {

namespace {

std::string source_name(ThoughtSource s) {
  switch (s) {
    case ThoughtSource::cache:
      return "cache";
    case ThoughtSource::template_rule:
      return "template";
    case ThoughtSource::remote:
      return "remote";
  }
  return "cache";
}

ThoughtSource source_from_name(const std::string& name) {
  if (name == "template") return ThoughtSource::template_rule;
  if (name == "remote") return ThoughtSource::remote;
  return ThoughtSource::cache;
}

}  // namespace

CotCache::CotCache(std::filesystem::path file) : file_(std::move(file)) {
  if (file_.empty()) return;
  std::ifstream in(file_);
  if (!in) return;  // created on first insert
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw ConfigError("cot cache: '" + file_.string() + "' has a non-JSON line");
    }
    Thought t;
    t.key = j.at("key").get<std::string>();
    t.prompt_id = j.at("prompt_id").get<int>();
    t.text = j.at("text").get<std::string>();
    t.token_count = j.value("token_count", count_tokens(t.text));
    t.source = source_from_name(j.value("source", "cache"));
    entries_.emplace(std::make_pair(t.key, t.prompt_id), std::move(t));
  }
}

std::optional<Thought> CotCache::lookup(const std::string& key, int prompt_id) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = entries_.find({key, prompt_id});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

Thought CotCache::insert(const std::string& key, int prompt_id, const std::string& text,
                         ThoughtSource origin, const nlohmann::json* provenance) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = entries_.find({key, prompt_id});
  if (it != entries_.end()) return it->second;  // entries are immutable

  Thought t;
  t.key = key;
  t.prompt_id = prompt_id;
  t.text = text;
  t.token_count = count_tokens(text);
  t.source = origin;
  auto [pos, _] = entries_.emplace(std::make_pair(key, prompt_id), std::move(t));

  if (!file_.empty()) {
    std::ofstream out(file_, std::ios::app);
    if (!out) throw Error("cot cache: cannot write file '" + file_.string() + "'");
    nlohmann::json j{{"key", key},
                     {"prompt_id", prompt_id},
                     {"text", pos->second.text},
                     {"token_count", pos->second.token_count},
                     {"source", source_name(origin)}};
    if (provenance != nullptr && !provenance->is_null()) j["provenance"] = *provenance;
    out << j.dump() << '\n';
  }
  return pos->second;
}

std::size_t CotCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// Cache-only backend

CacheReasoner::CacheReasoner(std::shared_ptr<CotCache> cache, ReasonerOptions options)
    : cache_(std::move(cache)), options_(options) {
  if (!cache_) throw ConfigError("cache reasoner: cache must be set");
}

Thought CacheReasoner::reason(const Observation& obs, const PromptCandidate& prompt) {
  const std::string& key = options_.key_on_observation ? obs.text : obs.situation;
  auto hit = cache_->lookup(key, prompt.id);
  if (!hit) {
    throw CacheMissError("cot cache: no entry for key '" + key + "', prompt " +
                         std::to_string(prompt.id) + "; prefill the cache first");
  }
  Thought t = *hit;
  t.text = truncate_tokens(t.text, options_.max_thought_tokens);
  t.token_count = count_tokens(t.text);
  t.source = ThoughtSource::cache;
  return t;
}

std::string CacheReasoner::backend_id() const {
  return "cache:" + cache_->file().string();
}

// ---------------------------------------------------------------------------
// Template backend

namespace {

// The frozen reasoner executes the prompt it is handed rather than
// second-guessing it against the observation: a prompt that says "head left"
// yields a left-marching thought even when the treasure sits on the right.
// This mirrors how the order/CoT pairs read, and it is what makes the outer
// entropy objective informative — a mismatched order injects directions that
// conflict with experience, so the action policy stays hesitant on those
// inputs, while matched orders sharpen it quickly.
std::string chainworld_thought(int prompt_id) {
  switch (prompt_id) {
    case 0:
      return "Head left and keep heading left. Each move costs 1 point and the treasure of "
             "100 points repays it at the left end. Choose go left at every step.";
    case 1:
      return "Go right and keep going right. Each move costs 1 point and the prize of 100 "
             "points repays it at the right end. Choose go right at every step.";
    default:
      return "Either end could hold the 100 points. Commit to one direction and walk to its "
             "end without turning back.";
  }
}

std::string chainworld_full_thought(int prompt_id, int num_prompts) {
  if (num_prompts == 2) {
    // Auto-generated candidate pair. The generator's task sheet fixes the
    // prize at position 9, so both canned thoughts advise marching right.
    if (prompt_id == 0) {
      return "To maximize the reward, consider taking the optimal sequence of go right "
             "actions.";
    }
    return "At position X, avoid go left toward -5, balance with go right to reach 100.";
  }
  return chainworld_thought(prompt_id);
}

// Same order-following contract as the chain game: the reasoner restates
// where the agent stands (the situation) and then carries out the order,
// whether or not that order points toward the goal.
std::string fourroom_thought(const std::string& situation, int prompt_id) {
  std::string prefix;
  if (situation == "same-room") {
    prefix = "You in the same room as the goal.";
  } else if (situation == "in-hallway") {
    prefix = "You in hallway.";
  } else {
    prefix = "You in a room, goal in another room.";
  }
  std::string directive;
  switch (prompt_id) {
    case 0:
      directive =
          "Try to reach the goal directly. Walk straight toward the goal's position, closing "
          "the distance each step.";
      break;
    case 1:
      directive =
          "Goal is not in current room. To move through different rooms, you can only go "
          "through hallways. Enter the left-handed hallway.";
      break;
    case 2:
      directive =
          "Goal is not in current room. To move through different rooms, you can only go "
          "through hallways. Enter the right-handed hallway.";
      break;
    case 3:
      directive = "Goal is not in current hallway. Go to the left-handed room entrance.";
      break;
    default:
      directive = "Goal is not in current hallway. Go to the right-handed room entrance.";
      break;
  }
  return prefix + " " + directive + " How do you choose a step?";
}

struct OvercookedSituation {
  bool lettuce_sliced = false;
  bool tomato_sliced = false;
  bool plated = false;
  std::string hand;  // none | raw | sliced | plate
};

OvercookedSituation parse_overcooked_situation(const std::string& situation) {
  OvercookedSituation s;
  s.lettuce_sliced = situation.find("lettuce-sliced") != std::string::npos;
  s.tomato_sliced = situation.find("tomato-sliced") != std::string::npos;
  s.plated = situation.find("|plated") != std::string::npos;
  if (situation.find("hand-plate") != std::string::npos) {
    s.hand = "plate";
  } else if (situation.find("hand-sliced") != std::string::npos) {
    s.hand = "sliced";
  } else if (situation.find("hand-raw") != std::string::npos) {
    s.hand = "raw";
  } else {
    s.hand = "none";
  }
  return s;
}

std::string overcooked_slice_thought(const OvercookedSituation& s, const std::string& food) {
  const bool done = food == "lettuce" ? s.lettuce_sliced : s.tomato_sliced;
  if (done) {
    return "task_queue = []\n# The " + food +
           " is already sliced; this subtask is done. Move on to the remaining ingredients.";
  }
  if (s.hand == "raw") {
    return "task_queue = []\n# A raw food is in hand: put it onto a cutboard and slice it\n"
           "task_queue.append((agent1.put_onto, \"cutboard0\"))\n"
           "task_queue.append((agent1.slice_on, \"cutboard0\"))";
  }
  if (s.hand == "sliced") {
    return "task_queue = []\n# The food in hand is already sliced; free the hand by putting it "
           "onto a plate\ntask_queue.append((agent1.put_onto, \"plate0\"))";
  }
  if (s.hand == "plate") {
    return "task_queue = []\n# Hands are full with a plate; deliver it before preparing more "
           "food\ntask_queue.append((agent1.deliver, None))";
  }
  // Empty hand, raw food somewhere on the map: the canonical three-step plan.
  return "task_queue = []\n# Step 1: Fetch a " + food +
         "\ntask_queue.append((agent1.fetch, \"" + food +
         "\"))\n# Step 2: Put the " + food +
         " onto the cutboard (assuming cutboard0 is available)\n"
         "task_queue.append((agent1.put_onto, \"cutboard0\"))\n# Step 3: Slice the " +
         food + " on the cutboard\ntask_queue.append((agent1.slice_on, \"cutboard0\"))";
}

std::string overcooked_salad_thought(const OvercookedSituation& s) {
  if (s.plated) {
    if (s.hand == "plate") {
      return "task_queue = []\n# The salad plate is in hand: deliver it\n"
             "task_queue.append((agent1.deliver, None))";
    }
    return "task_queue = []\n# The salad is plated: fetch the plate and deliver it\n"
           "task_queue.append((agent1.fetch, \"plate0\"))\n"
           "task_queue.append((agent1.deliver, None))";
  }
  if (!s.lettuce_sliced || !s.tomato_sliced) {
    return "task_queue = []\n# A salad needs both the lettuce and the tomato sliced before "
           "plating. Slice the remaining raw ingredients first.";
  }
  if (s.hand == "sliced") {
    return "task_queue = []\n# Put the sliced food in hand onto a plate, then add the other "
           "sliced food\ntask_queue.append((agent1.put_onto, \"plate0\"))\n"
           "task_queue.append((agent1.fetch, \"tomato\"))\n"
           "task_queue.append((agent1.put_onto, \"plate0\"))\n"
           "task_queue.append((agent1.deliver, None))";
  }
  // Empty hand, both sliced and unplated: the canonical five-step plan.
  return "task_queue = []\n# Step 1: Fetch a plate (choose either plate0 or plate1)\n"
         "task_queue.append((agent1.fetch, \"plate0\"))\n"
         "# Step 2: Put the sliced lettuce onto the plate\n"
         "task_queue.append((agent1.put_onto, \"plate0\"))\n"
         "# Step 3: Fetch the sliced tomato\n"
         "task_queue.append((agent1.fetch, \"tomato\"))\n"
         "# Step 4: Put the sliced tomato onto the plate\n"
         "task_queue.append((agent1.put_onto, \"plate0\"))\n"
         "# Step 5: Deliver the lettuce-tomato salad\n"
         "task_queue.append((agent1.deliver, None))";
}

std::string overcooked_thought(const std::string& situation, int prompt_id) {
  const OvercookedSituation s = parse_overcooked_situation(situation);
  switch (prompt_id) {
    case 0:
      return overcooked_slice_thought(s, "lettuce");
    case 1:
      return overcooked_slice_thought(s, "tomato");
    default:
      return overcooked_salad_thought(s);
  }
}

}  // namespace

std::string template_thought(const std::string& env_id, const std::string& situation,
                             int prompt_id, int num_prompts) {
  if (prompt_id < 0 || prompt_id >= num_prompts) {
    throw Error("template thought: prompt id " + std::to_string(prompt_id) +
                " outside menu of " + std::to_string(num_prompts));
  }
  if (env_id == "chainworld_full") return chainworld_full_thought(prompt_id, num_prompts);
  if (env_id == "chainworld_partial") return chainworld_thought(prompt_id);
  if (env_id == "fourroom") return fourroom_thought(situation, prompt_id);
  if (env_id.rfind("overcooked", 0) == 0) return overcooked_thought(situation, prompt_id);
  throw ConfigError("template thought: no rule table for environment '" + env_id + "'");
}

TemplateReasoner::TemplateReasoner(std::string env_id, ReasonerOptions options,
                                   std::shared_ptr<CotCache> write_through)
    : env_id_(std::move(env_id)), options_(options), cache_(std::move(write_through)) {
  // Fail fast on unknown environments rather than at the first step.
  template_thought(env_id_, "", 0, 1);
}

Thought TemplateReasoner::reason(const Observation& obs, const PromptCandidate& prompt) {
  const std::string& key = options_.key_on_observation ? obs.text : obs.situation;
  const int menu = options_.menu_size > 0 ? options_.menu_size : std::max(prompt.id + 1, 3);
  std::string text = template_thought(env_id_, obs.situation, prompt.id, menu);
  text = truncate_tokens(text, options_.max_thought_tokens);
  if (cache_) cache_->insert(key, prompt.id, text, ThoughtSource::template_rule);
  Thought t;
  t.text = std::move(text);
  t.token_count = count_tokens(t.text);
  t.source = ThoughtSource::template_rule;
  t.key = key;
  t.prompt_id = prompt.id;
  return t;
}

std::string TemplateReasoner::backend_id() const { return "template:" + env_id_; }

// ---------------------------------------------------------------------------
// Remote backend

struct RemoteReasoner::Impl {
  RemoteReasonerConfig cfg;
  std::string task_description;
  std::shared_ptr<CotCache> cache;
  ReasonerOptions options;
  JsonHttpClient client;
  std::mutex net_mutex;
  int remote_calls = 0;

  Impl(RemoteReasonerConfig c, std::string task, std::shared_ptr<CotCache> cc,
       ReasonerOptions opt)
      : cfg(std::move(c)),
        task_description(std::move(task)),
        cache(std::move(cc)),
        options(opt),
        client(cfg.endpoint, cfg.api_key, cfg.timeout_ms) {
    if (cfg.model.empty()) throw ConfigError("remote reasoner: model must be set");
    if (!cache) throw ConfigError("remote reasoner: cache must be set");
  }
};

RemoteReasoner::RemoteReasoner(RemoteReasonerConfig cfg, std::string task_description,
                               std::shared_ptr<CotCache> cache, ReasonerOptions options)
    : impl_(std::make_unique<Impl>(std::move(cfg), std::move(task_description),
                                   std::move(cache), options)) {}

RemoteReasoner::~RemoteReasoner() = default;

static std::string chat_completion(JsonHttpClient& client, const RemoteReasonerConfig& cfg,
                                   const std::string& system_message,
                                   const std::string& user_message) {
  nlohmann::json body{
      {"model", cfg.model},
      {"temperature", cfg.temperature},
      {"max_tokens", cfg.max_completion_tokens},
      {"messages",
       nlohmann::json::array({{{"role", "system"}, {"content", system_message}},
                              {{"role", "user"}, {"content", user_message}}})}};
  nlohmann::json resp = client.post_json(cfg.path, body);
  if (!resp.contains("choices") || !resp["choices"].is_array() || resp["choices"].empty()) {
    throw ProtocolError("chat response: missing \"choices\"");
  }
  const auto& msg = resp["choices"][0];
  if (!msg.contains("message") || !msg["message"].contains("content") ||
      !msg["message"]["content"].is_string()) {
    throw ProtocolError("chat response: choices[0].message.content missing");
  }
  std::string content = msg["message"]["content"].get<std::string>();
  if (content.empty()) throw ProtocolError("chat response: empty completion");
  return content;
}

Thought RemoteReasoner::reason(const Observation& obs, const PromptCandidate& prompt) {
  const std::string& key = impl_->options.key_on_observation ? obs.text : obs.situation;
  if (auto hit = impl_->cache->lookup(key, prompt.id)) {
    Thought t = *hit;
    t.text = truncate_tokens(t.text, impl_->options.max_thought_tokens);
    t.token_count = count_tokens(t.text);
    t.source = ThoughtSource::cache;
    return t;
  }

  const std::string user_message = "Observation: " + obs.text + "\nSituation: " +
                                   obs.situation + "\nPrompt: " + prompt.text +
                                   "\nThink it through, then answer in a few short sentences.";
  std::string completion;
  {
    std::lock_guard<std::mutex> lock(impl_->net_mutex);
    completion = chat_completion(impl_->client, impl_->cfg, impl_->task_description,
                                 user_message);
    ++impl_->remote_calls;
  }
  completion = truncate_tokens(completion, impl_->options.max_thought_tokens);
  nlohmann::json provenance{{"model", impl_->cfg.model},
                            {"request_digest", hex_digest(user_message)}};
  Thought stored = impl_->cache->insert(key, prompt.id, completion, ThoughtSource::remote,
                                        &provenance);
  stored.source = ThoughtSource::remote;
  return stored;
}

std::string RemoteReasoner::backend_id() const { return "remote:" + impl_->cfg.model; }

int RemoteReasoner::remote_call_count() const {
  std::lock_guard<std::mutex> lock(impl_->net_mutex);
  return impl_->remote_calls;
}

// ---------------------------------------------------------------------------
// Candidate generation

CompletionCache::CompletionCache(std::filesystem::path file) : file_(std::move(file)) {
  if (file_.empty()) return;
  std::ifstream in(file_);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;
    entries_.emplace(j.at("digest").get<std::string>(), j.at("completion").get<std::string>());
  }
}

std::optional<std::string> CompletionCache::lookup(const std::string& digest) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = entries_.find(digest);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void CompletionCache::insert(const std::string& digest, const std::string& request,
                             const std::string& completion) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (!entries_.emplace(digest, completion).second) return;
  if (file_.empty()) return;
  std::ofstream out(file_, std::ios::app);
  if (!out) throw Error("completion cache: cannot write file '" + file_.string() + "'");
  out << nlohmann::json{{"digest", digest}, {"request", request}, {"completion", completion}}
             .dump()
      << '\n';
}

std::vector<std::string> parse_prompt_list(const std::string& completion, int k) {
  std::vector<std::string> prompts;
  std::size_t start = 0;
  while (start <= completion.size()) {
    std::size_t end = completion.find('\n', start);
    if (end == std::string::npos) end = completion.size();
    std::string_view line(completion.data() + start, end - start);
    start = end + 1;

    // Trim and strip a "Prompt N:", "N." or "N)" prefix.
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) {
      line.remove_prefix(1);
    }
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) {
      line.remove_suffix(1);
    }
    if (line.empty()) continue;
    std::string_view rest = line;
    if (rest.substr(0, 7) == "Prompt " || rest.substr(0, 7) == "prompt ") {
      rest.remove_prefix(7);
    }
    std::size_t digits = 0;
    while (digits < rest.size() && std::isdigit(static_cast<unsigned char>(rest[digits]))) {
      ++digits;
    }
    if (digits == 0 || digits == rest.size()) continue;
    const char sep = rest[digits];
    if (sep != ':' && sep != '.' && sep != ')') continue;
    rest.remove_prefix(digits + 1);
    while (!rest.empty() && std::isspace(static_cast<unsigned char>(rest.front()))) {
      rest.remove_prefix(1);
    }
    if (!rest.empty()) prompts.emplace_back(rest);
  }
  if (static_cast<int>(prompts.size()) < k) {
    throw ProtocolError("prompt generation: expected " + std::to_string(k) +
                        " numbered prompts, parsed " + std::to_string(prompts.size()) +
                        "; raw completion follows:\n" + completion);
  }
  prompts.resize(static_cast<std::size_t>(k));
  return prompts;
}

CandidateSet generate_candidates(const RemoteReasonerConfig& cfg,
                                 const std::string& task_description,
                                 const std::string& situation_description, int k,
                                 CompletionCache* cache) {
  if (k < 1) throw Error("prompt generation: k must be >= 1");
  std::string user_message = task_description;
  if (!situation_description.empty()) user_message += "\n" + situation_description;
  user_message += "\nPlease provide " + std::to_string(k) +
                  " simple prompt questions about how to maximize reward. Number them from "
                  "\"Prompt 1:\" to \"Prompt " +
                  std::to_string(k) + ":\".";
  const std::string system_message =
      "You write short prompt questions that steer an agent toward high reward.";

  const std::string digest = hex_digest(cfg.model + "\x1f" + system_message + "\x1f" +
                                        user_message);
  std::string completion;
  if (cache != nullptr) {
    if (auto hit = cache->lookup(digest)) completion = *hit;
  }
  if (completion.empty()) {
    JsonHttpClient client(cfg.endpoint, cfg.api_key, cfg.timeout_ms);
    completion = chat_completion(client, cfg, system_message, user_message);
    if (cache != nullptr) cache->insert(digest, user_message, completion);
  }

  CandidateSet set;
  set.task = task_description;
  auto texts = parse_prompt_list(completion, k);
  for (int i = 0; i < k; ++i) {
    PromptCandidate c;
    c.id = i;
    c.text = std::move(texts[static_cast<std::size_t>(i)]);
    set.candidates.push_back(std::move(c));
  }
  return set;
}

}  // namespace bilevel
