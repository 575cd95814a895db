#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "expweaver/errors.hpp"

// Domain types shared by every other module: tasks, context segments, steps,
// trajectories, and the canonical context rendering they all agree on.

namespace expweaver {

using json = nlohmann::json;

inline constexpr int kDefaultMaxSteps = 30;

// Delimiters around injected experience, byte-fixed so traces stay comparable.
inline constexpr std::string_view kExperienceBlockOpen = "<Retrieved Memory Items>";
inline constexpr std::string_view kExperienceBlockClose = "<End of Retrieved Memory>";

enum class EnvKind { household, shop, corpus_qa, replay };

inline std::string to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::household: return "household";
    case EnvKind::shop: return "shop";
    case EnvKind::corpus_qa: return "corpus_qa";
    case EnvKind::replay: return "replay";
  }
  return "household";
}

inline EnvKind env_kind_from_string(std::string_view s) {
  if (s == "household") return EnvKind::household;
  if (s == "shop") return EnvKind::shop;
  if (s == "corpus_qa") return EnvKind::corpus_qa;
  if (s == "replay") return EnvKind::replay;
  throw_error(Errc::config_error, "unknown env_kind \"" + std::string(s) + "\"");
}

struct TaskSpec {
  std::string id;
  EnvKind env_kind = EnvKind::household;
  std::string goal_text;
  std::uint64_t seed = 0;
  int max_steps = kDefaultMaxSteps;
};

inline void validate(const TaskSpec& task) {
  if (task.id.empty()) throw_error(Errc::config_error, "task id must be non-empty");
  if (task.max_steps < 1) throw_error(Errc::config_error, "task max_steps must be >= 1");
}

enum class SegmentKind { system, goal, step_history, experience_block, reasoning_trace };

// One renderable slice of agent context.
//
// Conventions:
//  - step_history text is the display form ("> <action>\n<observation>" for a
//    completed step, or the bare observation for the pre-episode one);
//    observation_text always holds just the observation so retrieval queries
//    can reach it without re-parsing the display form.
//  - experience_block text is the raw injected content (no delimiters; those
//    are added at render time) and experience_ids lists the rendered units.
struct ContextSegment {
  SegmentKind kind = SegmentKind::system;
  std::string text;
  std::optional<int> origin_step;
  std::vector<std::string> experience_ids;
  std::string observation_text;
};

// Full next-token log-probability record for one generated token. The pair
// list holds known alternatives (excluding `token`); when the exponentiated
// probabilities sum to 1 the distribution is complete.
struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
  std::vector<std::pair<std::string, double>> top_alternatives;
};

inline void validate(const TokenLogprob& t) {
  if (t.logprob > 0.0)
    throw_error(Errc::config_error, "token logprob must be <= 0");
  double mass = std::exp(t.logprob);
  for (const auto& [tok, lp] : t.top_alternatives) {
    if (lp > 0.0) throw_error(Errc::config_error, "alternative logprob must be <= 0");
    mass += std::exp(lp);
  }
  if (mass > 1.0 + 1e-9)
    throw_error(Errc::config_error, "token distribution mass exceeds 1");
}

enum class StrategyKind {
  no_experience,
  init_only,
  always_on,
  interwoven,
  random_utilization,
  empty_at_trigger,
};

inline std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::no_experience: return "no_experience";
    case StrategyKind::init_only: return "init_only";
    case StrategyKind::always_on: return "always_on";
    case StrategyKind::interwoven: return "interwoven";
    case StrategyKind::random_utilization: return "random_utilization";
    case StrategyKind::empty_at_trigger: return "empty_at_trigger";
  }
  return "no_experience";
}

inline StrategyKind strategy_kind_from_string(std::string_view s) {
  if (s == "no_experience") return StrategyKind::no_experience;
  if (s == "init_only") return StrategyKind::init_only;
  if (s == "always_on") return StrategyKind::always_on;
  if (s == "interwoven") return StrategyKind::interwoven;
  if (s == "random_utilization") return StrategyKind::random_utilization;
  if (s == "empty_at_trigger") return StrategyKind::empty_at_trigger;
  throw_error(Errc::config_error, "unknown strategy kind \"" + std::string(s) + "\"");
}

struct StrategySpec {
  StrategyKind kind = StrategyKind::no_experience;
  std::optional<double> random_p;  // present iff kind == random_utilization
  std::uint64_t rng_seed = 0;
};

inline void validate(const StrategySpec& s) {
  bool is_random = s.kind == StrategyKind::random_utilization;
  if (is_random != s.random_p.has_value())
    throw_error(Errc::config_error,
                "random_p must be present iff strategy is random_utilization");
  if (s.random_p && (*s.random_p < 0.0 || *s.random_p > 1.0))
    throw_error(Errc::config_error, "random_p must lie in [0, 1]");
}

struct Step {
  int index = 0;
  std::string reasoning;  // h_t, trigger token stripped
  bool trigger_fired = false;
  bool retrieval_performed = false;
  std::vector<std::string> retrieved_ids;
  std::uint64_t injected_chars = 0;
  std::string action;  // a_t
  std::string observation;
  double reward = 0.0;
  bool terminal = false;
  // Reasoning-phase logprobs when the backend supplied them.
  std::optional<std::vector<TokenLogprob>> token_logprobs;
};

struct Trajectory {
  TaskSpec task;
  StrategySpec strategy;
  std::string profile_id;
  std::string model_id;
  std::vector<Step> steps;
  int outcome = 0;           // binary reward R
  double raw_score = 0.0;    // pre-binarization score in [0, 1]
  std::uint64_t memory_version = 0;
};

// ---------------------------------------------------------------------------
// Context assembly

namespace detail {

inline std::string render_segment(const ContextSegment& seg) {
  if (seg.kind != SegmentKind::experience_block) return seg.text;
  std::string out(kExperienceBlockOpen);
  if (!seg.text.empty()) {
    out += '\n';
    out += seg.text;
    out += '\n';
  }
  out += kExperienceBlockClose;
  return out;
}

}  // namespace detail

// Canonical deterministic rendering: segments joined by single '\n', no
// trailing newline; experience blocks wrapped in the fixed delimiters with
// nothing between them when the injected content is empty.
inline std::string render_context(const std::vector<ContextSegment>& segments) {
  std::string out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i > 0) out += '\n';
    out += detail::render_segment(segments[i]);
  }
  return out;
}

// Retrieval query: goal text, most recent observation (if any), and the
// current reasoning, joined by '\n'. Injected experience is deliberately
// excluded from the query.
inline std::string build_retrieval_query(const std::vector<ContextSegment>& segments,
                                         const std::string& current_reasoning) {
  const std::string* goal = nullptr;
  const std::string* last_obs = nullptr;
  for (const auto& seg : segments) {
    if (seg.kind == SegmentKind::goal && goal == nullptr) goal = &seg.text;
    if (seg.kind == SegmentKind::step_history && !seg.observation_text.empty())
      last_obs = &seg.observation_text;
  }
  if (goal == nullptr) throw_error(Errc::missing_goal, "context has no goal segment");
  std::string query = *goal;
  if (last_obs != nullptr) {
    query += '\n';
    query += *last_obs;
  }
  if (!current_reasoning.empty()) {
    query += '\n';
    query += current_reasoning;
  }
  return query;
}

// Ordered segment container enforcing the rendering-order invariant:
// system, goal, then step-ordered history/experience/reasoning.
class Context {
 public:
  Context() = default;

  Context(std::string system_text, std::string goal_text) {
    if (!system_text.empty())
      segments_.push_back({SegmentKind::system, std::move(system_text), std::nullopt, {}, {}});
    segments_.push_back({SegmentKind::goal, std::move(goal_text), std::nullopt, {}, {}});
  }

  void push(ContextSegment seg) {
    if (seg.kind == SegmentKind::system || seg.kind == SegmentKind::goal) {
      bool only_preamble = true;
      for (const auto& s : segments_)
        if (s.kind != SegmentKind::system && s.kind != SegmentKind::goal) only_preamble = false;
      if (!only_preamble)
        throw_error(Errc::config_error, "system/goal segments must precede step content");
    }
    segments_.push_back(std::move(seg));
  }

  // Always-on keeps a single live block: drop the previous live one (if any)
  // before appending the replacement.
  void replace_live_experience_block(ContextSegment seg) {
    if (live_block_.has_value()) {
      segments_.erase(segments_.begin() + static_cast<std::ptrdiff_t>(*live_block_));
    }
    live_block_ = segments_.size();
    segments_.push_back(std::move(seg));
  }

  const std::vector<ContextSegment>& segments() const { return segments_; }
  std::string render() const { return render_context(segments_); }

 private:
  std::vector<ContextSegment> segments_;
  std::optional<std::size_t> live_block_;
};

// ---------------------------------------------------------------------------
// Trajectory construction

inline void check_step_invariants(const Trajectory& traj, const Step& step) {
  switch (traj.strategy.kind) {
    case StrategyKind::interwoven:
      if (step.retrieval_performed != step.trigger_fired)
        throw_error(Errc::config_error,
                    "interwoven requires retrieval_performed == trigger_fired");
      break;
    case StrategyKind::empty_at_trigger:
      if (step.retrieval_performed != step.trigger_fired)
        throw_error(Errc::config_error,
                    "empty_at_trigger requires retrieval_performed == trigger_fired");
      if (step.injected_chars != 0)
        throw_error(Errc::config_error, "empty_at_trigger requires injected_chars == 0");
      break;
    default:
      break;
  }
  if (!step.retrieval_performed && !step.retrieved_ids.empty())
    throw_error(Errc::config_error, "retrieved_ids must be empty without a retrieval");
}

inline Trajectory append_step(Trajectory traj, Step step) {
  if (step.index != static_cast<int>(traj.steps.size()))
    throw_error(Errc::index_mismatch,
                "expected index " + std::to_string(traj.steps.size()) + ", got " +
                    std::to_string(step.index));
  if (!traj.steps.empty() && traj.steps.back().terminal)
    throw_error(Errc::step_after_terminal, "trajectory already terminal");
  check_step_invariants(traj, step);
  traj.steps.push_back(std::move(step));
  return traj;
}

// ---------------------------------------------------------------------------
// JSON serialization (trajectory JSONL schema, version 1)

inline void to_json(json& j, const TaskSpec& t) {
  j = json{{"id", t.id},
           {"env_kind", to_string(t.env_kind)},
           {"goal_text", t.goal_text},
           {"seed", t.seed},
           {"max_steps", t.max_steps}};
}

inline void from_json(const json& j, TaskSpec& t) {
  t.id = j.at("id").get<std::string>();
  t.env_kind = env_kind_from_string(j.at("env_kind").get<std::string>());
  t.goal_text = j.at("goal_text").get<std::string>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.max_steps = j.at("max_steps").get<int>();
}

inline void to_json(json& j, const StrategySpec& s) {
  j = json{{"kind", to_string(s.kind)}, {"rng_seed", s.rng_seed}};
  if (s.random_p) j["random_p"] = *s.random_p;
}

inline void from_json(const json& j, StrategySpec& s) {
  s.kind = strategy_kind_from_string(j.at("kind").get<std::string>());
  s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  s.random_p.reset();
  if (j.contains("random_p") && !j.at("random_p").is_null())
    s.random_p = j.at("random_p").get<double>();
}

inline void to_json(json& j, const TokenLogprob& t) {
  json alts = json::array();
  for (const auto& [tok, lp] : t.top_alternatives) alts.push_back(json::array({tok, lp}));
  j = json{{"token", t.token}, {"logprob", t.logprob}, {"top_alternatives", alts}};
}

inline void from_json(const json& j, TokenLogprob& t) {
  t.token = j.at("token").get<std::string>();
  t.logprob = j.at("logprob").get<double>();
  t.top_alternatives.clear();
  for (const auto& alt : j.at("top_alternatives"))
    t.top_alternatives.emplace_back(alt.at(0).get<std::string>(), alt.at(1).get<double>());
}

inline void to_json(json& j, const Step& s) {
  j = json{{"index", s.index},
           {"reasoning", s.reasoning},
           {"trigger_fired", s.trigger_fired},
           {"retrieval_performed", s.retrieval_performed},
           {"retrieved_ids", s.retrieved_ids},
           {"injected_chars", s.injected_chars},
           {"action", s.action},
           {"observation", s.observation},
           {"reward", s.reward},
           {"terminal", s.terminal}};
  if (s.token_logprobs) j["token_logprobs"] = *s.token_logprobs;
}

inline void from_json(const json& j, Step& s) {
  s.index = j.at("index").get<int>();
  s.reasoning = j.at("reasoning").get<std::string>();
  s.trigger_fired = j.at("trigger_fired").get<bool>();
  s.retrieval_performed = j.at("retrieval_performed").get<bool>();
  s.retrieved_ids = j.at("retrieved_ids").get<std::vector<std::string>>();
  s.injected_chars = j.at("injected_chars").get<std::uint64_t>();
  s.action = j.at("action").get<std::string>();
  s.observation = j.at("observation").get<std::string>();
  s.reward = j.at("reward").get<double>();
  s.terminal = j.at("terminal").get<bool>();
  s.token_logprobs.reset();
  if (j.contains("token_logprobs") && !j.at("token_logprobs").is_null())
    s.token_logprobs = j.at("token_logprobs").get<std::vector<TokenLogprob>>();
}

inline void to_json(json& j, const Trajectory& t) {
  j = json{{"schema", 1},
           {"task", t.task},
           {"strategy", t.strategy},
           {"profile_id", t.profile_id},
           {"model_id", t.model_id},
           {"steps", t.steps},
           {"outcome", t.outcome},
           {"raw_score", t.raw_score},
           {"memory_version", t.memory_version}};
}

inline void from_json(const json& j, Trajectory& t) {
  if (j.at("schema").get<int>() != 1)
    throw_error(Errc::schema_version_mismatch,
                "trajectory schema " + j.at("schema").dump() + " unsupported");
  t.task = j.at("task").get<TaskSpec>();
  t.strategy = j.at("strategy").get<StrategySpec>();
  t.profile_id = j.at("profile_id").get<std::string>();
  t.model_id = j.at("model_id").get<std::string>();
  t.steps = j.at("steps").get<std::vector<Step>>();
  t.outcome = j.at("outcome").get<int>();
  t.raw_score = j.at("raw_score").get<double>();
  t.memory_version = j.at("memory_version").get<std::uint64_t>();
}

// ---------------------------------------------------------------------------
// JSONL log I/O

inline void write_trajectories_jsonl(std::ostream& out, const std::vector<Trajectory>& log) {
  for (const auto& traj : log) out << json(traj).dump() << '\n';
}

inline void write_trajectories_jsonl(const std::string& path, const std::vector<Trajectory>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_error(Errc::config_error, "cannot open " + path + " for writing");
  write_trajectories_jsonl(out, log);
}

inline std::vector<Trajectory> read_trajectories_jsonl(std::istream& in) {
  std::vector<Trajectory> log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      log.push_back(json::parse(line).get<Trajectory>());
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw_error(Errc::corrupt_snapshot,
                  "bad trajectory at line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return log;
}

inline std::vector<Trajectory> read_trajectories_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_error(Errc::config_error, "cannot open " + path);
  return read_trajectories_jsonl(in);
}

}  // namespace expweaver
