#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "expweaver/environment.hpp"
#include "expweaver/rng.hpp"

// Desk-scale household text game: pick-and-place with heat/cool/clean
// predicates over a seeded single-room world. Command grammar and
// observation phrasing follow the usual text-game conventions
// ("go to cabinet 1" → "You arrive at cabinet 1. ...").

namespace expweaver {

struct Receptacle {
  bool openable = false;
  bool open = true;  // non-openable receptacles are always "open"
  std::vector<std::string> contents;
};

struct ObjectProps {
  bool hot = false;
  bool clean = false;
  bool cool = false;
};

struct HouseholdGoal {
  std::string verb = "none";  // heat | cool | clean | none
  std::string object_class;   // e.g. "apple" matches "apple 1", "apple 2"
  std::string destination;    // full receptacle name, e.g. "garbagecan 1"
};

struct HouseholdState {
  std::map<std::string, Receptacle> receptacles;
  std::optional<std::string> agent_at;
  std::optional<std::string> holding;
  std::map<std::string, ObjectProps> object_props;
  HouseholdGoal goal;
};

namespace detail {

// "apple 1" → "apple"; names without a trailing instance number pass through.
inline std::string object_class_of(const std::string& name) {
  auto pos = name.rfind(' ');
  if (pos == std::string::npos) return name;
  for (std::size_t i = pos + 1; i < name.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(name[i]))) return name;
  return name.substr(0, pos);
}

// "a apple 1, a bread 1, and a cup 1" — the article is always "a" and the
// comma always precedes the final "and", even for two items.
inline std::string join_listing(const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i > 0) out += ", ";
    if (i > 0 && i + 1 == names.size()) out += "and ";
    out += "a " + names[i];
  }
  return out;
}

}  // namespace detail

inline bool goal_satisfied(const HouseholdState& state) {
  auto it = state.receptacles.find(state.goal.destination);
  if (it == state.receptacles.end()) return false;
  for (const auto& obj : it->second.contents) {
    if (detail::object_class_of(obj) != state.goal.object_class) continue;
    auto props_it = state.object_props.find(obj);
    ObjectProps props = props_it == state.object_props.end() ? ObjectProps{} : props_it->second;
    if (state.goal.verb == "heat" && !props.hot) continue;
    if (state.goal.verb == "cool" && !props.cool) continue;
    if (state.goal.verb == "clean" && !props.clean) continue;
    return true;
  }
  return false;
}

// "heat some apple and put it in garbagecan." — instance numbers dropped,
// matching how goals are phrased to the agent.
inline std::string household_goal_text(const HouseholdGoal& goal) {
  std::string dest = detail::object_class_of(goal.destination);
  if (goal.verb == "none") return "put some " + goal.object_class + " in " + dest + ".";
  return goal.verb + " some " + goal.object_class + " and put it in " + dest + ".";
}

inline void to_json(json& j, const HouseholdState& s) {
  json receptacles = json::object();
  for (const auto& [name, r] : s.receptacles)
    receptacles[name] =
        json{{"openable", r.openable}, {"open", r.open}, {"contents", r.contents}};
  json props = json::object();
  for (const auto& [name, p] : s.object_props)
    props[name] = json{{"hot", p.hot}, {"clean", p.clean}, {"cool", p.cool}};
  j = json{{"receptacles", receptacles},
           {"agent_at", s.agent_at ? json(*s.agent_at) : json()},
           {"holding", s.holding ? json(*s.holding) : json()},
           {"object_props", props},
           {"goal",
            {{"verb", s.goal.verb},
             {"object_class", s.goal.object_class},
             {"destination", s.goal.destination}}}};
}

inline void from_json(const json& j, HouseholdState& s) {
  s.receptacles.clear();
  for (const auto& [name, r] : j.at("receptacles").items()) {
    Receptacle rec;
    r.at("openable").get_to(rec.openable);
    r.at("open").get_to(rec.open);
    r.at("contents").get_to(rec.contents);
    s.receptacles.emplace(name, std::move(rec));
  }
  s.agent_at.reset();
  if (!j.at("agent_at").is_null()) s.agent_at = j.at("agent_at").get<std::string>();
  s.holding.reset();
  if (!j.at("holding").is_null()) s.holding = j.at("holding").get<std::string>();
  s.object_props.clear();
  for (const auto& [name, p] : j.at("object_props").items()) {
    ObjectProps props;
    p.at("hot").get_to(props.hot);
    p.at("clean").get_to(props.clean);
    p.at("cool").get_to(props.cool);
    s.object_props.emplace(name, props);
  }
  j.at("goal").at("verb").get_to(s.goal.verb);
  j.at("goal").at("object_class").get_to(s.goal.object_class);
  j.at("goal").at("destination").get_to(s.goal.destination);
}

class HouseholdEnv : public Environment {
 public:
  HouseholdEnv() = default;

  // Test hook: run an episode in an exact hand-built world instead of a
  // seeded one.
  static HouseholdEnv from_state(HouseholdState state) {
    HouseholdEnv env;
    env.preset_state_ = std::move(state);
    return env;
  }

  EnvKind kind() const override { return EnvKind::household; }

  Observation reset(const TaskSpec& task) override {
    start_episode(task);
    if (preset_state_)
      state_ = *preset_state_;
    else
      state_ = generate_world(task.seed);
    state_.agent_at.reset();
    goal_text_ = household_goal_text(state_.goal);
    std::vector<std::string> names;
    for (const auto& [name, r] : state_.receptacles) names.push_back(name);
    return Observation{
        "You are in the middle of a room. Looking quickly around you, you see " +
            detail::join_listing(names) + ".\nYour task is to: " + goal_text_,
        0.0, false};
  }

  Observation step(const std::string& action_text) override {
    require_active();
    std::string action = detail::normalize_whitespace(action_text);
    std::transform(action.begin(), action.end(), action.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    Observation obs{apply_action(action), 0.0, false};
    if (goal_satisfied(state_)) {
      obs.text += " Task is SOLVED.";
      obs.reward = 1.0;
      obs.terminal = true;
    }
    return finish_step(std::move(obs));
  }

  std::string goal_text() const override { return goal_text_; }
  const HouseholdState& state() const { return state_; }

 private:
  std::string apply_action(const std::string& action) {
    if (action == "look") return describe_location("You look around. ");
    if (action == "inventory") {
      if (state_.holding) return "You are carrying: a " + *state_.holding + ".";
      return "You are not carrying anything.";
    }
    if (action.rfind("go to ", 0) == 0) return do_go(action.substr(6));
    if (action.rfind("open ", 0) == 0) return do_open(action.substr(5));
    if (action.rfind("close ", 0) == 0) return do_close(action.substr(6));
    if (action.rfind("take ", 0) == 0) return do_take(action.substr(5));
    if (action.rfind("put ", 0) == 0) return do_put(action.substr(4));
    if (action.rfind("heat ", 0) == 0) return do_apply(action.substr(5), "heat", "microwave");
    if (action.rfind("cool ", 0) == 0) return do_apply(action.substr(5), "cool", "fridge");
    if (action.rfind("clean ", 0) == 0) return do_apply(action.substr(6), "clean", "sinkbasin");
    return "Nothing happens.";
  }

  Receptacle* find_receptacle(const std::string& name) {
    auto it = state_.receptacles.find(name);
    return it == state_.receptacles.end() ? nullptr : &it->second;
  }

  Receptacle* here() {
    return state_.agent_at ? find_receptacle(*state_.agent_at) : nullptr;
  }

  // "On the cabinet 1, you see a glassbottle 1, and a soapbottle 1." for
  // surfaces; "The cabinet 2 is closed." / "The cabinet 2 is open. In it,
  // you see a plate 1." for containers.
  std::string describe_receptacle(const std::string& name, const Receptacle& r) {
    if (r.openable && !r.open) return "The " + name + " is closed.";
    if (r.openable) {
      std::string out = "The " + name + " is open.";
      if (!r.contents.empty()) out += " In it, you see " + detail::join_listing(r.contents) + ".";
      return out;
    }
    if (r.contents.empty()) return "On the " + name + ", you see nothing.";
    return "On the " + name + ", you see " + detail::join_listing(r.contents) + ".";
  }

  std::string describe_location(const std::string& prefix) {
    if (!state_.agent_at) return prefix + "You are in the middle of the room.";
    return prefix + describe_receptacle(*state_.agent_at, *here());
  }

  std::string do_go(const std::string& name) {
    Receptacle* r = find_receptacle(name);
    if (!r) return "Nothing happens.";
    state_.agent_at = name;
    return "You arrive at " + name + ". " + describe_receptacle(name, *r);
  }

  std::string do_open(const std::string& name) {
    Receptacle* r = find_receptacle(name);
    if (!r || !r->openable || r->open || state_.agent_at != std::optional<std::string>(name))
      return "Nothing happens.";
    r->open = true;
    return "You open the " + name + ". " + describe_receptacle(name, *r);
  }

  std::string do_close(const std::string& name) {
    Receptacle* r = find_receptacle(name);
    if (!r || !r->openable || !r->open || state_.agent_at != std::optional<std::string>(name))
      return "Nothing happens.";
    r->open = false;
    return "You close the " + name + ".";
  }

  // "take apple 1 from garbagecan 1"
  std::string do_take(const std::string& rest) {
    auto pos = rest.find(" from ");
    if (pos == std::string::npos) return "Nothing happens.";
    std::string obj = rest.substr(0, pos);
    std::string name = rest.substr(pos + 6);
    Receptacle* r = find_receptacle(name);
    if (!r || state_.agent_at != std::optional<std::string>(name)) return "Nothing happens.";
    if ((r->openable && !r->open) || state_.holding) return "Nothing happens.";
    auto it = std::find(r->contents.begin(), r->contents.end(), obj);
    if (it == r->contents.end()) return "Nothing happens.";
    r->contents.erase(it);
    state_.holding = obj;
    return "You pick up the " + obj + " from the " + name + ".";
  }

  // "put apple 1 in garbagecan 1" / "put apple 1 on plate 1"-style surfaces;
  // the reply echoes the preposition the player used.
  std::string do_put(const std::string& rest) {
    auto pos = rest.find(" in ");
    std::string preposition = "in";
    if (pos == std::string::npos) {
      pos = rest.find(" on ");
      preposition = "on";
    }
    if (pos == std::string::npos) return "Nothing happens.";
    std::string obj = rest.substr(0, pos);
    std::string name = rest.substr(pos + 4);
    Receptacle* r = find_receptacle(name);
    if (!r || state_.agent_at != std::optional<std::string>(name)) return "Nothing happens.";
    if ((r->openable && !r->open) || state_.holding != std::optional<std::string>(obj))
      return "Nothing happens.";
    r->contents.push_back(obj);
    state_.holding.reset();
    return "You put the " + obj + " " + preposition + " the " + name + ".";
  }

  // "heat apple 1 with microwave 1" (and cool/clean analogs). The appliance
  // must be of the right class and the agent must stand at it holding the
  // object; open/closed state is not checked for appliances.
  std::string do_apply(const std::string& rest, const std::string& verb,
                       const std::string& appliance_class) {
    auto pos = rest.find(" with ");
    if (pos == std::string::npos) return "Nothing happens.";
    std::string obj = rest.substr(0, pos);
    std::string name = rest.substr(pos + 6);
    if (detail::object_class_of(name) != appliance_class) return "Nothing happens.";
    if (!find_receptacle(name) || state_.agent_at != std::optional<std::string>(name))
      return "Nothing happens.";
    if (state_.holding != std::optional<std::string>(obj)) return "Nothing happens.";
    ObjectProps& props = state_.object_props[obj];
    if (verb == "heat") {
      props.hot = true;
      props.cool = false;
    } else if (verb == "cool") {
      props.cool = true;
      props.hot = false;
    } else {
      props.clean = true;
    }
    return "You " + verb + " the " + obj + " using the " + name + ".";
  }

  // Seeded world: a fixed room skeleton, 8–12 objects scattered over it, and
  // a goal guaranteed not to hold at reset.
  static HouseholdState generate_world(std::uint64_t seed) {
    Pcg32 rng(mix_seeds(seed, fnv1a64("household")));
    HouseholdState s;
    s.receptacles["cabinet 1"] = Receptacle{true, false, {}};
    s.receptacles["cabinet 2"] = Receptacle{true, false, {}};
    s.receptacles["countertop 1"] = Receptacle{false, true, {}};
    s.receptacles["diningtable 1"] = Receptacle{false, true, {}};
    s.receptacles["fridge 1"] = Receptacle{true, false, {}};
    s.receptacles["garbagecan 1"] = Receptacle{false, true, {}};
    s.receptacles["microwave 1"] = Receptacle{true, false, {}};
    s.receptacles["sinkbasin 1"] = Receptacle{false, true, {}};
    if (rng.bernoulli(0.5)) s.receptacles["drawer 1"] = Receptacle{true, false, {}};
    if (rng.bernoulli(0.5)) s.receptacles["shelf 1"] = Receptacle{false, true, {}};

    std::vector<std::string> places;
    for (const auto& [name, r] : s.receptacles) places.push_back(name);
    const std::vector<std::string> classes = {"apple",  "bread",  "bowl",       "cup",
                                              "lettuce", "potato", "plate",     "mug",
                                              "egg",     "tomato", "soapbottle", "glassbottle"};
    std::map<std::string, int> instance_count;
    std::vector<std::string> placed;
    std::size_t n_objects = 8 + rng.next_below(5);
    for (std::size_t i = 0; i < n_objects; ++i) {
      const std::string& cls = classes[rng.next_below(static_cast<std::uint32_t>(classes.size()))];
      std::string obj = cls + " " + std::to_string(++instance_count[cls]);
      s.receptacles[places[rng.next_below(static_cast<std::uint32_t>(places.size()))]]
          .contents.push_back(obj);
      s.object_props[obj] = ObjectProps{};
      placed.push_back(obj);
    }

    const std::vector<std::string> verbs = {"heat", "cool", "clean", "none"};
    const std::vector<std::string> destinations = {"garbagecan 1", "countertop 1",
                                                   "diningtable 1"};
    s.goal.verb = verbs[rng.next_below(4)];
    s.goal.object_class = detail::object_class_of(
        placed[rng.next_below(static_cast<std::uint32_t>(placed.size()))]);
    s.goal.destination = destinations[rng.next_below(3)];
    // A verb-less goal could hold at reset if an instance already sits at the
    // destination; walk the candidate destinations until it does not.
    for (std::size_t i = 0; i < destinations.size() && goal_satisfied(s); ++i)
      s.goal.destination = destinations[(rng.next_below(3) + i) % 3];
    if (goal_satisfied(s)) s.goal.verb = "heat";
    return s;
  }

  std::optional<HouseholdState> preset_state_;
  HouseholdState state_;
  std::string goal_text_;
};

}  // namespace expweaver
