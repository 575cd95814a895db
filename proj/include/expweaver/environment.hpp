#pragma once

#include <algorithm>
#include <cctype>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "expweaver/core.hpp"
#include "expweaver/errors.hpp"

// Environment interface plus the replay environment used for golden-trace
// tests. Concrete world simulators live in household.hpp / shop.hpp / qa.hpp.

namespace expweaver {

struct Observation {
  std::string text;
  double reward = 0.0;
  bool terminal = false;
};

inline bool operator==(const Observation& a, const Observation& b) {
  return a.text == b.text && a.reward == b.reward && a.terminal == b.terminal;
}

namespace detail {

inline std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

// Trim plus collapse every whitespace run to a single space.
inline std::string normalize_whitespace(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += c;
  }
  return out;
}

}  // namespace detail

class Environment {
 public:
  virtual ~Environment() = default;

  virtual EnvKind kind() const = 0;
  virtual Observation reset(const TaskSpec& task) = 0;
  virtual Observation step(const std::string& action_text) = 0;

  // Instruction text of the active episode (generated worlds synthesize it).
  virtual std::string goal_text() const { return task_.goal_text; }

  int steps_taken() const { return steps_taken_; }

 protected:
  // Shared reset/step bookkeeping: kind check, step counting, the max-steps
  // cutoff, and the finished-episode guard.
  void start_episode(const TaskSpec& task) {
    if (task.env_kind != kind())
      throw_error(Errc::unknown_env_kind, "task env_kind " + to_string(task.env_kind) +
                                              " does not match a " + to_string(kind()) +
                                              " environment");
    validate(task);
    task_ = task;
    steps_taken_ = 0;
    active_ = true;
  }

  void require_active() const {
    if (!active_) throw_error(Errc::episode_finished, "episode not active (reset required)");
  }

  Observation finish_step(Observation obs) {
    ++steps_taken_;
    if (!obs.terminal && steps_taken_ >= task_.max_steps) {
      obs.terminal = true;
      obs.reward = 0.0;
    }
    if (obs.terminal) active_ = false;
    return obs;
  }

  const TaskSpec& task() const { return task_; }

 private:
  TaskSpec task_;
  int steps_taken_ = 0;
  bool active_ = false;
};

// ---------------------------------------------------------------------------
// Replay

struct ReplayStep {
  std::string action;
  std::string observation;
  double reward = 0.0;
  bool terminal = false;
};

struct ReplayRecording {
  std::string initial_observation;
  std::vector<ReplayStep> steps;
};

inline void to_json(json& j, const ReplayStep& s) {
  j = json{{"action", s.action},
           {"observation", s.observation},
           {"reward", s.reward},
           {"terminal", s.terminal}};
}

inline void from_json(const json& j, ReplayStep& s) {
  j.at("action").get_to(s.action);
  j.at("observation").get_to(s.observation);
  j.at("reward").get_to(s.reward);
  j.at("terminal").get_to(s.terminal);
}

inline void to_json(json& j, const ReplayRecording& r) {
  j = json{{"initial_observation", r.initial_observation}, {"steps", r.steps}};
}

inline void from_json(const json& j, ReplayRecording& r) {
  j.at("initial_observation").get_to(r.initial_observation);
  j.at("steps").get_to(r.steps);
}

// Replays a recorded episode: each step must send the recorded action
// (modulo whitespace) and gets the recorded observation back. Any other
// action is a hard divergence, not a soft "Nothing happens."
class ReplayEnv : public Environment {
 public:
  explicit ReplayEnv(ReplayRecording recording) : recording_(std::move(recording)) {
    if (recording_.steps.empty())
      throw_error(Errc::config_error, "replay recording has no steps");
  }

  EnvKind kind() const override { return EnvKind::replay; }

  Observation reset(const TaskSpec& task) override {
    start_episode(task);
    cursor_ = 0;
    return Observation{recording_.initial_observation, 0.0, false};
  }

  Observation step(const std::string& action_text) override {
    require_active();
    if (cursor_ >= recording_.steps.size())
      throw_error(Errc::recording_exhausted,
                  "recording exhausted after " + std::to_string(cursor_) + " steps");
    const ReplayStep& expected = recording_.steps[cursor_];
    std::string got = detail::normalize_whitespace(action_text);
    std::string want = detail::normalize_whitespace(expected.action);
    if (got != want) throw DivergedFromTrace(cursor_, want, got);
    ++cursor_;
    return finish_step(Observation{expected.observation, expected.reward, expected.terminal});
  }

  const ReplayRecording& recording() const { return recording_; }

 private:
  ReplayRecording recording_;
  std::size_t cursor_ = 0;
};

inline std::unique_ptr<Environment> make_replay_env(ReplayRecording recording) {
  return std::make_unique<ReplayEnv>(std::move(recording));
}

}  // namespace expweaver
