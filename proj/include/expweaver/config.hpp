#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "expweaver/core.hpp"
#include "expweaver/environments.hpp"
#include "expweaver/memory.hpp"
#include "expweaver/policy.hpp"
#include "expweaver/remote.hpp"
#include "expweaver/strategy.hpp"

// Experiment configuration: one JSON document describing profile, strategy,
// environment, tasks, model backend(s), memory, and output. Loaders here
// validate eagerly so the CLI can fail fast with exit code 2.

namespace expweaver {

struct ModelConfig {
  std::string backend = "scripted";  // scripted | remote
  std::string script_path;           // scripted only
  RemoteConfig remote;               // remote only
  std::optional<double> temperature; // profile default when absent
  int max_tokens = 512;
  bool request_logprobs = false;
  int top_logprobs_k = 0;
};

struct MemoryConfig {
  std::string snapshot_path;  // empty start when blank
  bool frozen = false;
};

struct TasksConfig {
  std::string file;  // JSONL of task specs; exclusive with count
  int count = 0;
  std::uint64_t base_seed = 0;
};

struct ExperimentConfig {
  FrameworkProfile profile;
  StrategySpec strategy;
  EnvKind env_kind = EnvKind::household;
  TasksConfig tasks;
  ModelConfig model;
  std::optional<ModelConfig> judge;  // model doubles as judge when absent
  MemoryConfig memory;
  std::string output_dir = "out";
  std::uint64_t rng_seed = 0;
  EpisodeLimits limits;
  int jobs = 1;
};

namespace detail {

inline ModelConfig parse_model_config(const json& j) {
  ModelConfig m;
  m.backend = j.value("backend", "scripted");
  if (m.backend == "scripted") {
    m.script_path = j.value("script", "");
    if (m.script_path.empty())
      throw_error(Errc::config_error, "scripted backend requires a script path");
  } else if (m.backend == "remote") {
    m.remote.endpoint = j.value("endpoint", "");
    m.remote.model = j.value("model", "");
    m.remote.api_key = j.value("api_key", "");
    if (m.remote.endpoint.empty() || m.remote.model.empty())
      throw_error(Errc::config_error, "remote backend requires endpoint and model");
  } else {
    throw_error(Errc::config_error, "unknown backend \"" + m.backend + "\"");
  }
  if (j.contains("temperature")) m.temperature = j.at("temperature").get<double>();
  m.max_tokens = j.value("max_tokens", 512);
  m.request_logprobs = j.value("request_logprobs", false);
  m.top_logprobs_k = j.value("top_logprobs_k", 0);
  return m;
}

}  // namespace detail

inline ExperimentConfig load_experiment_config(const json& doc) {
  try {
    ExperimentConfig cfg;
    cfg.profile = FrameworkProfile::for_id(
        profile_id_from_string(doc.at("profile_id").get<std::string>()));
    cfg.rng_seed = doc.value("rng_seed", std::uint64_t{0});

    const json& strat = doc.at("strategy");
    cfg.strategy.kind = strategy_kind_from_string(strat.at("kind").get<std::string>());
    if (strat.contains("random_p")) cfg.strategy.random_p = strat.at("random_p").get<double>();
    cfg.strategy.rng_seed = strat.value("rng_seed", cfg.rng_seed);
    validate(cfg.strategy);

    cfg.env_kind = env_kind_from_string(doc.at("env_kind").get<std::string>());
    if (cfg.env_kind == EnvKind::replay)
      throw_error(Errc::config_error, "run config cannot target the replay environment");

    const json& tasks = doc.at("tasks");
    cfg.tasks.file = tasks.value("file", "");
    cfg.tasks.count = tasks.value("count", 0);
    cfg.tasks.base_seed = tasks.value("base_seed", cfg.rng_seed);
    if (cfg.tasks.file.empty() == (cfg.tasks.count <= 0))
      throw_error(Errc::config_error, "tasks need exactly one of file or positive count");

    cfg.model = detail::parse_model_config(doc.at("model"));
    if (doc.contains("judge")) cfg.judge = detail::parse_model_config(doc.at("judge"));

    if (doc.contains("memory")) {
      cfg.memory.snapshot_path = doc.at("memory").value("snapshot", "");
      cfg.memory.frozen = doc.at("memory").value("frozen", false);
    }
    if (cfg.profile.frozen_at_run_start) cfg.memory.frozen = true;

    cfg.output_dir = doc.value("output_dir", "out");
    if (doc.contains("limits")) {
      cfg.limits.max_steps = doc.at("limits").value("max_steps", kDefaultMaxSteps);
      cfg.limits.max_retrievals = doc.at("limits").value("max_retrievals", 32);
    }
    validate(cfg.limits);
    cfg.jobs = doc.value("jobs", 1);
    if (cfg.jobs < 1) throw_error(Errc::config_error, "jobs must be >= 1");
    return cfg;
  } catch (const Error&) {
    throw;
  } catch (const json::exception& e) {
    throw_error(Errc::config_error, std::string("bad experiment config: ") + e.what());
  }
}

inline ExperimentConfig load_experiment_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_error(Errc::config_error, "cannot open config " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw_error(Errc::config_error, path.string() + ": " + e.what());
  }
  return load_experiment_config(doc);
}

// ---------------------------------------------------------------------------
// Script and task files

// Script document: {"rules": [{"pattern", "response", "distributions"?}]}.
// distributions is a per-token list of [token, probability] pairs; the first
// pair of each list is the generated token.
inline std::vector<ScriptRule> load_script(const json& doc) {
  try {
    std::vector<ScriptRule> rules;
    for (const auto& r : doc.at("rules")) {
      ScriptRule rule;
      rule.pattern = r.at("pattern").get<std::string>();
      rule.response = r.at("response").get<std::string>();
      if (r.contains("distributions")) {
        std::vector<std::vector<std::pair<std::string, double>>> dists;
        for (const auto& d : r.at("distributions")) {
          std::vector<std::pair<std::string, double>> dist;
          for (const auto& entry : d)
            dist.emplace_back(entry.at(0).get<std::string>(), entry.at(1).get<double>());
          dists.push_back(std::move(dist));
        }
        rule.synthetic_distributions = std::move(dists);
      }
      rules.push_back(std::move(rule));
    }
    return rules;
  } catch (const Error&) {
    throw;
  } catch (const json::exception& e) {
    throw_error(Errc::config_error, std::string("bad script document: ") + e.what());
  }
}

inline std::vector<ScriptRule> load_script_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_error(Errc::config_error, "cannot open script " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw_error(Errc::config_error, path.string() + ": " + e.what());
  }
  return load_script(doc);
}

inline std::vector<TaskSpec> load_tasks_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_error(Errc::config_error, "cannot open tasks file " + path.string());
  std::vector<TaskSpec> tasks;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      tasks.push_back(json::parse(line).get<TaskSpec>());
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw_error(Errc::config_error,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    validate(tasks.back());
  }
  return tasks;
}

// Seeded task batch; instruction text comes from resetting a scratch
// environment so goal_text always matches the generated world.
inline std::vector<TaskSpec> generate_tasks(EnvKind kind, int count, std::uint64_t base_seed,
                                            int max_steps = kDefaultMaxSteps) {
  if (count < 1) throw_error(Errc::config_error, "task count must be >= 1");
  std::vector<TaskSpec> tasks;
  tasks.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    TaskSpec task;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "task-%03d", i + 1);
    task.id = buf;
    task.env_kind = kind;
    task.seed = base_seed + static_cast<std::uint64_t>(i);
    task.max_steps = max_steps;
    std::unique_ptr<Environment> env = make_environment(kind);
    env->reset(task);
    task.goal_text = env->goal_text();
    tasks.push_back(std::move(task));
  }
  return tasks;
}

inline std::vector<TaskSpec> resolve_tasks(const ExperimentConfig& cfg) {
  if (!cfg.tasks.file.empty()) return load_tasks_jsonl(cfg.tasks.file);
  return generate_tasks(cfg.env_kind, cfg.tasks.count, cfg.tasks.base_seed,
                        cfg.limits.max_steps);
}

// ---------------------------------------------------------------------------
// Backend construction

inline std::unique_ptr<PolicyBackend> make_backend(const ModelConfig& cfg) {
  if (cfg.backend == "scripted")
    return std::make_unique<ScriptedBackend>(load_script_file(cfg.script_path));
#if !defined(EXPWEAVER_NO_HTTPLIB)
  if (cfg.backend == "remote") return std::make_unique<RemoteBackend>(cfg.remote);
#endif
  throw_error(Errc::config_error, "cannot construct backend \"" + cfg.backend + "\"");
}

inline GenConfig resolve_gen_config(const ModelConfig& model, const FrameworkProfile& profile) {
  GenConfig gen;
  gen.temperature = model.temperature.value_or(profile.default_temperature);
  gen.max_tokens = model.max_tokens;
  gen.request_logprobs = model.request_logprobs;
  gen.top_logprobs_k = model.top_logprobs_k;
  return gen;
}

inline MemoryStore load_memory(const MemoryConfig& cfg) {
  MemoryStore store;
  if (!cfg.snapshot_path.empty()) {
    std::ifstream in(cfg.snapshot_path, std::ios::binary);
    if (!in)
      throw_error(Errc::config_error, "cannot open memory snapshot " + cfg.snapshot_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    store = MemoryStore::load_bytes(buf.str());
  }
  if (cfg.frozen && !store.frozen()) store.freeze();
  return store;
}

}  // namespace expweaver
