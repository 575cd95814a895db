#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "expweaver/assets.hpp"
#include "expweaver/core.hpp"
#include "expweaver/environment.hpp"
#include "expweaver/memory.hpp"
#include "expweaver/policy.hpp"
#include "expweaver/rng.hpp"

// The experiment core: runs one episode under a chosen utilization strategy,
// plus the batch driver and the causal-ablation re-runner.

namespace expweaver {

struct EpisodeLimits {
  int max_steps = kDefaultMaxSteps;
  int max_retrievals = 32;  // guards against trigger loops
};

inline void validate(const EpisodeLimits& limits) {
  if (limits.max_steps < 1 || limits.max_retrievals < 1)
    throw_error(Errc::config_error, "episode limits must be >= 1");
}

// Invocation rate for the random-utilization ablation: the observed
// invocations-per-step ratio, clamped to a probability.
inline double compute_random_p(double avg_invocations, double avg_length) {
  if (avg_length <= 0.0) throw_error(Errc::non_positive_length, "avg_length must be > 0");
  if (avg_invocations < 0.0)
    throw_error(Errc::config_error, "avg_invocations must be >= 0");
  return std::min(1.0, avg_invocations / avg_length);
}

namespace detail {

// What a strategy injects at one decision point. AWM has no retrieval
// mechanism, so under any injecting strategy it contributes the whole store.
inline std::vector<ExperienceUnit> fetch_units(const MemoryStore& store,
                                               const Embedder& embedder,
                                               const std::string& query,
                                               const FrameworkProfile& profile) {
  if (profile.retrieval_enabled) return retrieve(store, embedder, query, profile);
  return store.units();
}

inline std::vector<std::string> unit_ids(const std::vector<ExperienceUnit>& units) {
  std::vector<std::string> ids;
  ids.reserve(units.size());
  for (const auto& u : units) ids.push_back(u.id);
  return ids;
}

// Strip the "> " command prefix scripted responses carry in display form.
inline std::string strip_action_prefix(std::string action) {
  std::string trimmed = normalize_whitespace(action);
  if (trimmed.rfind("> ", 0) == 0) return trimmed.substr(2);
  if (!trimmed.empty() && trimmed.front() == '>')
    return normalize_whitespace(trimmed.substr(1));
  return trimmed;
}

}  // namespace detail

// Runs one episode of `task` in `env` under the given strategy and framework
// profile. The store is read-only here; distillation happens after the
// episode via commit_episode.
inline Trajectory run_episode(Environment& env, PolicyBackend& model, const MemoryStore& store,
                              const Embedder& embedder, const TaskSpec& task,
                              const StrategySpec& strategy, const FrameworkProfile& profile,
                              const EpisodeLimits& limits = {},
                              const std::optional<GenConfig>& gen = std::nullopt) {
  validate(strategy);
  validate(limits);
  GenConfig cfg = gen.value_or(GenConfig{profile.default_temperature, 512, false, 0});

  Observation obs = env.reset(task);
  std::string goal = task.goal_text.empty() ? env.goal_text() : task.goal_text;

  bool trigger_gated = strategy.kind == StrategyKind::interwoven ||
                       strategy.kind == StrategyKind::empty_at_trigger ||
                       strategy.kind == StrategyKind::random_utilization;
  Context ctx(assets::system_prompt(task.env_kind, trigger_gated), goal);

  Trajectory traj;
  traj.task = task;
  traj.task.goal_text = goal;
  traj.strategy = strategy;
  traj.profile_id = to_string(profile.id);
  traj.model_id = model.model_id();
  traj.memory_version = store.version();

  int retrievals_done = 0;
  auto spend_retrieval = [&] {
    if (retrievals_done >= limits.max_retrievals)
      throw_error(Errc::retrieval_budget_exceeded,
                  "episode exceeded " + std::to_string(limits.max_retrievals) + " retrievals");
    ++retrievals_done;
  };

  // Pre-step injection for init-only. AWM's documented behaviour (inject all
  // workflows once at the start) makes always-on take this path too.
  bool init_style = strategy.kind == StrategyKind::init_only ||
                    (strategy.kind == StrategyKind::always_on && !profile.retrieval_enabled);
  std::optional<Step> pending_pre_retrieval;
  if (init_style) {
    spend_retrieval();
    std::vector<ExperienceUnit> units = detail::fetch_units(store, embedder, goal, profile);
    std::string content = render_units(units);
    Step marker;
    marker.retrieval_performed = true;
    marker.retrieved_ids = detail::unit_ids(units);
    marker.injected_chars = content.size();
    pending_pre_retrieval = std::move(marker);
    ctx.push(make_experience_segment(std::move(content), pending_pre_retrieval->retrieved_ids,
                                     std::nullopt));
  }

  ctx.push({SegmentKind::step_history, obs.text, std::nullopt, {}, obs.text});

  // One Bernoulli stream per episode so suite draws differ across tasks but
  // replay identically for a fixed (strategy seed, task) pair.
  Pcg32 coin(mix_seeds(strategy.rng_seed, mix_seeds(task.seed, fnv1a64(task.id))));

  for (int t = 0; t < limits.max_steps; ++t) {
    Generation phase1 = reasoning_phase(model, ctx, cfg);
    TriggerParse parsed = parse_trigger(phase1.text);

    Step step;
    step.index = t;
    step.reasoning = parsed.cleaned;
    step.trigger_fired = parsed.fired;
    step.token_logprobs = std::move(phase1.token_logprobs);
    if (pending_pre_retrieval) {
      step.retrieval_performed = true;
      step.retrieved_ids = pending_pre_retrieval->retrieved_ids;
      step.injected_chars = pending_pre_retrieval->injected_chars;
      pending_pre_retrieval.reset();
    }

    // Decide this step's injection.
    std::optional<std::string> inject;
    std::vector<std::string> injected_ids;
    bool wants_retrieval = false;
    bool blank_injection = false;
    switch (strategy.kind) {
      case StrategyKind::no_experience:
      case StrategyKind::init_only:
        break;
      case StrategyKind::always_on:
        wants_retrieval = profile.retrieval_enabled;  // AWM handled pre-step
        break;
      case StrategyKind::interwoven:
        wants_retrieval = parsed.fired;
        break;
      case StrategyKind::empty_at_trigger:
        wants_retrieval = parsed.fired;
        blank_injection = true;
        break;
      case StrategyKind::random_utilization:
        wants_retrieval = coin.bernoulli(*strategy.random_p);
        break;
    }

    if (wants_retrieval) {
      spend_retrieval();
      std::string query = build_retrieval_query(ctx.segments(), parsed.cleaned);
      std::vector<ExperienceUnit> units = detail::fetch_units(store, embedder, query, profile);
      injected_ids = detail::unit_ids(units);
      std::string content = blank_injection ? std::string() : render_units(units);
      step.retrieval_performed = true;
      step.retrieved_ids = injected_ids;
      step.injected_chars = content.size();
      if (strategy.kind == StrategyKind::always_on) {
        ctx.replace_live_experience_block(
            make_experience_segment(std::move(content), injected_ids, t));
      } else {
        inject = std::move(content);
      }
    }

    Generation phase2 = action_phase(model, ctx, parsed.cleaned, inject, cfg);
    step.action = detail::strip_action_prefix(phase2.text);

    Observation result = env.step(step.action);
    step.observation = result.text;
    step.reward = result.reward;
    step.terminal = result.terminal;
    traj = append_step(std::move(traj), std::move(step));

    ctx.push(make_reasoning_segment(parsed.cleaned, t));
    if (inject) ctx.push(make_experience_segment(std::move(*inject), injected_ids, t));
    ctx.push({SegmentKind::step_history, "> " + traj.steps.back().action + "\n" + result.text, t,
              {}, result.text});

    if (result.terminal) break;
  }

  if (!traj.steps.empty()) {
    const Step& last = traj.steps.back();
    traj.raw_score = last.reward;
    traj.outcome = (last.terminal && last.reward == 1.0) ? 1 : 0;
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Suites

struct SuiteSummary {
  int n = 0;
  int successes = 0;
  double success_rate = 0.0;
  std::uint64_t retrieval_events_total = 0;
  double retrievals_per_sample = 0.0;
};

struct SuiteResult {
  std::vector<Trajectory> trajectories;
  SuiteSummary summary;
};

inline void to_json(json& j, const SuiteSummary& s) {
  j = json{{"n", s.n},
           {"successes", s.successes},
           {"success_rate", s.success_rate},
           {"retrieval_events_total", s.retrieval_events_total},
           {"retrievals_per_sample", s.retrievals_per_sample}};
}

inline SuiteSummary summarize(const std::vector<Trajectory>& trajectories) {
  SuiteSummary s;
  s.n = static_cast<int>(trajectories.size());
  for (const auto& traj : trajectories) {
    s.successes += traj.outcome;
    for (const auto& step : traj.steps)
      if (step.retrieval_performed) ++s.retrieval_events_total;
  }
  if (s.n > 0) {
    s.success_rate = static_cast<double>(s.successes) / s.n;
    s.retrievals_per_sample = static_cast<double>(s.retrieval_events_total) / s.n;
  }
  return s;
}

using EnvFactory = std::function<std::unique_ptr<Environment>(const TaskSpec&)>;

// Batch driver. Online runs (mutable store + judge present) are sequential
// by contract — the episode order is semantically significant because each
// commit feeds the next retrieval. Frozen/offline suites may run episodes on
// `jobs` threads; results land in task order either way. `on_episode` fires
// in task order so callers can flush partial logs.
inline SuiteResult run_suite(const std::vector<TaskSpec>& tasks, const EnvFactory& make_env,
                             PolicyBackend& model, PolicyBackend* judge, MemoryStore& store,
                             const Embedder& embedder, const StrategySpec& strategy,
                             const FrameworkProfile& profile, const EpisodeLimits& limits = {},
                             const std::optional<GenConfig>& gen = std::nullopt, int jobs = 1,
                             const std::function<void(const Trajectory&)>& on_episode = {}) {
  if (tasks.empty()) throw_error(Errc::empty_log, "task suite is empty");
  if (profile.frozen_at_run_start && !store.frozen()) store.freeze();
  bool online = judge != nullptr && !store.frozen() &&
                strategy.kind != StrategyKind::no_experience;

  SuiteResult result;
  result.trajectories.reserve(tasks.size());

  if (online || jobs <= 1) {
    for (const auto& task : tasks) {
      std::unique_ptr<Environment> env = make_env(task);
      Trajectory traj =
          run_episode(*env, model, store, embedder, task, strategy, profile, limits, gen);
      if (online) commit_episode(store, traj, profile, *judge, embedder);
      if (on_episode) on_episode(traj);
      result.trajectories.push_back(std::move(traj));
    }
  } else {
    std::vector<Trajectory> slots(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        try {
          std::unique_ptr<Environment> env = make_env(tasks[i]);
          slots[i] = run_episode(*env, model, store, embedder, tasks[i], strategy, profile,
                                 limits, gen);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    int n_threads = std::min<int>(jobs, static_cast<int>(tasks.size()));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
    for (auto& traj : slots) {
      if (on_episode) on_episode(traj);
      result.trajectories.push_back(std::move(traj));
    }
  }

  result.summary = summarize(result.trajectories);
  return result;
}

// ---------------------------------------------------------------------------
// Causal ablation re-runs

enum class AblationMode { empty, random };

inline std::string to_string(AblationMode mode) {
  return mode == AblationMode::empty ? "empty" : "random";
}

inline AblationMode ablation_mode_from_string(std::string_view s) {
  if (s == "empty") return AblationMode::empty;
  if (s == "random") return AblationMode::random;
  throw_error(Errc::config_error, "unknown ablation mode \"" + std::string(s) + "\"");
}

struct AblationResult {
  SuiteResult run;
  StrategySpec strategy;  // the derived ablation spec (carries p for random)
};

// Re-runs the task suite of an interwoven log under an ablated strategy:
// blank injections at triggers, or Bernoulli injections with p matched to
// the log's observed invocation rate.
inline AblationResult replay_ablation(const std::vector<Trajectory>& log, AblationMode mode,
                                      const EnvFactory& make_env, PolicyBackend& model,
                                      PolicyBackend* judge, MemoryStore& store,
                                      const Embedder& embedder, const FrameworkProfile& profile,
                                      std::uint64_t rng_seed, const EpisodeLimits& limits = {},
                                      const std::optional<GenConfig>& gen = std::nullopt,
                                      int jobs = 1) {
  if (log.empty()) throw_error(Errc::empty_log, "trajectory log is empty");
  std::uint64_t retrievals = 0;
  std::uint64_t steps = 0;
  std::vector<TaskSpec> tasks;
  tasks.reserve(log.size());
  for (const auto& traj : log) {
    if (traj.strategy.kind != StrategyKind::interwoven)
      throw_error(Errc::log_not_interwoven,
                  "ablation needs an interwoven log, found " + to_string(traj.strategy.kind));
    for (const auto& step : traj.steps)
      if (step.retrieval_performed) ++retrievals;
    steps += traj.steps.size();
    tasks.push_back(traj.task);
  }

  StrategySpec spec;
  spec.rng_seed = rng_seed;
  if (mode == AblationMode::empty) {
    spec.kind = StrategyKind::empty_at_trigger;
  } else {
    spec.kind = StrategyKind::random_utilization;
    double n = static_cast<double>(log.size());
    spec.random_p = compute_random_p(retrievals / n, steps / n);
  }

  AblationResult result;
  result.strategy = spec;
  result.run = run_suite(tasks, make_env, model, judge, store, embedder, spec, profile, limits,
                         gen, jobs);
  return result;
}

}  // namespace expweaver
