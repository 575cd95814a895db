#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "expweaver/expweaver.hpp"

namespace fs = std::filesystem;
using namespace expweaver;

namespace {

// 2 = the inputs were wrong (config, schema, flag misuse); 3 = the run broke.
int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::config_error:
    case Errc::missing_goal:
    case Errc::unknown_env_kind:
    case Errc::schema_version_mismatch:
    case Errc::corrupt_snapshot:
    case Errc::empty_log:
    case Errc::log_not_interwoven:
    case Errc::no_logprobs:
    case Errc::group_too_small:
    case Errc::non_positive_ratio:
    case Errc::non_positive_length:
    case Errc::length_mismatch:
      return 2;
    default:
      return 3;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_error(Errc::config_error, "cannot write " + path.string());
  out << text;
}

std::vector<Trajectory> read_log(const std::string& path) {
  if (!fs::exists(path)) throw_error(Errc::config_error, "no such log: " + path);
  return read_trajectories_jsonl(path);
}

struct RunArgs {
  std::string config_path;
  std::string out_dir;  // overrides config when set
  int jobs = 0;         // overrides config when > 0
};

void cmd_run(const RunArgs& args) {
  ExperimentConfig cfg = load_experiment_config_file(args.config_path);
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  if (args.jobs > 0) cfg.jobs = args.jobs;
  fs::create_directories(cfg.output_dir);

  std::vector<TaskSpec> tasks = resolve_tasks(cfg);
  std::unique_ptr<PolicyBackend> model = make_backend(cfg.model);
  std::unique_ptr<PolicyBackend> judge_owned;
  if (cfg.judge) judge_owned = make_backend(*cfg.judge);
  // Without a dedicated judge the policy model distills its own memory.
  PolicyBackend* judge = judge_owned ? judge_owned.get() : model.get();
  MemoryStore store = load_memory(cfg.memory);
  LocalEmbedder embedder;
  GenConfig gen = resolve_gen_config(cfg.model, cfg.profile);
  EnvFactory make_env = [](const TaskSpec& task) { return make_environment(task.env_kind); };

  // Stream each finished trajectory so a mid-suite failure still leaves a log.
  fs::path log_path = fs::path(cfg.output_dir) / "trajectories.jsonl";
  std::ofstream log_out(log_path, std::ios::binary);
  if (!log_out) throw_error(Errc::config_error, "cannot write " + log_path.string());
  auto on_episode = [&log_out](const Trajectory& traj) {
    log_out << json(traj).dump() << '\n';
    log_out.flush();
  };

  SuiteResult result = run_suite(tasks, make_env, *model, judge, store, embedder, cfg.strategy,
                                 cfg.profile, cfg.limits, gen, cfg.jobs, on_episode);

  json summary = result.summary;
  summary["strategy"] = to_string(cfg.strategy.kind);
  summary["profile"] = to_string(cfg.profile.id);
  summary["env_kind"] = to_string(cfg.env_kind);
  summary["model_id"] = model->model_id();
  summary["memory_version"] = store.version();
  write_text(fs::path(cfg.output_dir) / "summary.json", summary.dump(2) + "\n");
  write_text(fs::path(cfg.output_dir) / "memory_final.json", store.snapshot_bytes());
  std::cout << summary.dump() << "\n";
}

struct AnalyzeArgs {
  std::string log_path;
  std::string out_dir = "out";
  bool plot = false;
  bool entropy = false;
};

void cmd_analyze(const AnalyzeArgs& args) {
  std::vector<Trajectory> log = read_log(args.log_path);
  fs::create_directories(args.out_dir);

  UsageReport usage = usage_report(log);
  write_text(fs::path(args.out_dir) / "usage_report.json", json(usage).dump(2) + "\n");
  write_text(fs::path(args.out_dir) / "temporal.csv", temporal_csv(usage.per_step_fraction));

  std::optional<EntropyReport> entropy;
  try {
    entropy = entropy_trigger_alignment(log);
  } catch (const Error& e) {
    if (e.code() != Errc::no_logprobs || args.entropy) throw;
    // No logprobs and the caller didn't insist: skip the entropy report.
  }
  if (entropy) {
    write_text(fs::path(args.out_dir) / "entropy_report.json", json(*entropy).dump(2) + "\n");
    write_text(fs::path(args.out_dir) / "entropy.csv", entropy_csv(entropy->per_step_mean_entropy));
  }
  if (args.plot) {
    write_text(fs::path(args.out_dir) / "temporal.svg",
               line_chart_svg(usage.per_step_fraction, "Retrieval invocation rate over steps",
                              "fraction of trajectories"));
    if (entropy)
      write_text(fs::path(args.out_dir) / "entropy.svg",
                 line_chart_svg(entropy->per_step_mean_entropy, "Mean token entropy over steps",
                                "entropy (nats)"));
  }

  json out = usage;
  out["entropy_report_written"] = entropy.has_value();
  std::cout << out.dump() << "\n";
}

struct AblateArgs {
  std::string log_path;
  std::string mode = "empty";
  std::string config_path;
  std::string out_dir;
  int jobs = 0;
};

void cmd_ablate(const AblateArgs& args) {
  ExperimentConfig cfg = load_experiment_config_file(args.config_path);
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  if (args.jobs > 0) cfg.jobs = args.jobs;
  AblationMode mode = ablation_mode_from_string(args.mode);
  std::vector<Trajectory> log = read_log(args.log_path);

  fs::create_directories(cfg.output_dir);
  std::unique_ptr<PolicyBackend> model = make_backend(cfg.model);
  std::unique_ptr<PolicyBackend> judge_owned;
  if (cfg.judge) judge_owned = make_backend(*cfg.judge);
  PolicyBackend* judge = judge_owned ? judge_owned.get() : model.get();
  MemoryStore store = load_memory(cfg.memory);
  LocalEmbedder embedder;
  GenConfig gen = resolve_gen_config(cfg.model, cfg.profile);
  EnvFactory make_env = [](const TaskSpec& task) { return make_environment(task.env_kind); };

  AblationResult ablated = replay_ablation(log, mode, make_env, *model, judge, store, embedder,
                                           cfg.profile, cfg.rng_seed, cfg.limits, gen, cfg.jobs);
  SuiteSummary baseline = summarize(log);

  json report;
  report["mode"] = to_string(mode);
  report["interwoven"] = baseline;
  report["ablated"] = ablated.run.summary;
  report["delta_success_rate"] = ablated.run.summary.success_rate - baseline.success_rate;
  report["strategy"] = ablated.strategy;
  write_text(fs::path(cfg.output_dir) / "ablation_report.json", report.dump(2) + "\n");
  write_trajectories_jsonl((fs::path(cfg.output_dir) / "ablated_trajectories.jsonl").string(),
                           ablated.run.trajectories);
  std::cout << report.dump() << "\n";
}

struct GrpoArgs {
  std::string samples_path;
  std::string out_dir;
  double beta = 0.01;
  double epsilon = 0.2;
};

void cmd_grpo_eval(const GrpoArgs& args) {
  if (!fs::exists(args.samples_path))
    throw_error(Errc::config_error, "no such samples file: " + args.samples_path);
  std::vector<GroupSample> samples = read_group_samples_jsonl(args.samples_path);

  GrpoConfig cfg;
  cfg.beta = args.beta;
  cfg.epsilon = args.epsilon;
  cfg.group_size = samples.size();
  validate(cfg);

  std::vector<double> rewards;
  rewards.reserve(samples.size());
  for (const auto& s : samples) rewards.push_back(s.reward);
  std::vector<double> advantages = group_advantages(rewards, cfg.std_stabilizer);
  double kl_sum = 0.0;
  for (const auto& s : samples) kl_sum += kl_penalty(s.logp_new, s.logp_ref);

  json out;
  out["group_size"] = cfg.group_size;
  out["beta"] = cfg.beta;
  out["epsilon"] = cfg.epsilon;
  out["advantages"] = advantages;
  out["mean_kl"] = kl_sum / static_cast<double>(samples.size());
  out["objective"] = objective(samples, cfg);
  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    write_text(fs::path(args.out_dir) / "grpo_eval.json", out.dump(2) + "\n");
  }
  std::cout << out.dump() << "\n";
}

json snapshot_overview(const MemoryStore& store) {
  std::map<std::string, int> by_kind;
  for (const auto& u : store.units()) ++by_kind[std::string(to_string(u.kind))];
  json out;
  out["version"] = store.version();
  out["frozen"] = store.frozen();
  out["units"] = store.size();
  out["by_kind"] = by_kind;
  return out;
}

MemoryStore load_snapshot_file(const std::string& path) {
  MemoryConfig cfg;
  cfg.snapshot_path = path;
  return load_memory(cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"experience-utilization strategies for scripted agent suites"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "execute a configured episode suite");
  run->add_option("--config", run_args.config_path, "experiment config JSON")->required();
  run->add_option("--out", run_args.out_dir, "output directory (overrides config)");
  run->add_option("--jobs", run_args.jobs, "worker threads for frozen-store suites");
  run->callback([&] { cmd_run(run_args); });

  AnalyzeArgs an_args;
  auto* analyze = app.add_subcommand("analyze", "usage and entropy reports from a log");
  analyze->add_option("--log", an_args.log_path, "trajectories.jsonl to analyze")->required();
  analyze->add_option("--out", an_args.out_dir, "output directory");
  analyze->add_flag("--plot", an_args.plot, "also write SVG charts");
  analyze->add_flag("--entropy", an_args.entropy, "require the entropy report (fails without logprobs)");
  analyze->callback([&] { cmd_analyze(an_args); });

  AblateArgs ab_args;
  auto* ablate = app.add_subcommand("ablate", "re-run an interwoven log with ablated retrieval");
  ablate->add_option("--log", ab_args.log_path, "interwoven trajectories.jsonl")->required();
  ablate->add_option("--mode", ab_args.mode, "empty | random")->required();
  ablate->add_option("--config", ab_args.config_path, "experiment config JSON")->required();
  ablate->add_option("--out", ab_args.out_dir, "output directory (overrides config)");
  ablate->add_option("--jobs", ab_args.jobs, "worker threads for frozen-store suites");
  ablate->callback([&] { cmd_ablate(ab_args); });

  GrpoArgs grpo_args;
  auto* grpo = app.add_subcommand("grpo-eval", "group-relative objective over a sample file");
  grpo->add_option("--samples", grpo_args.samples_path, "JSONL of group samples")->required();
  grpo->add_option("--out", grpo_args.out_dir, "also write grpo_eval.json here");
  grpo->add_option("--beta", grpo_args.beta, "KL penalty coefficient");
  grpo->add_option("--epsilon", grpo_args.epsilon, "clip range");
  grpo->callback([&] { cmd_grpo_eval(grpo_args); });

  auto* memory = app.add_subcommand("memory", "inspect or rewrite memory snapshots");
  memory->require_subcommand(1);
  std::string snap_in;
  std::string snap_out_dir = "out";
  auto* inspect = memory->add_subcommand("inspect", "print a snapshot overview");
  inspect->add_option("--snapshot", snap_in, "memory snapshot JSON")->required();
  inspect->callback([&] { std::cout << snapshot_overview(load_snapshot_file(snap_in)).dump() << "\n"; });
  auto* snapshot = memory->add_subcommand("snapshot", "write a normalized (or empty) snapshot");
  snapshot->add_option("--snapshot", snap_in, "existing snapshot to normalize (empty store when omitted)");
  snapshot->add_option("--out", snap_out_dir, "output directory");
  snapshot->callback([&] {
    MemoryStore store = snap_in.empty() ? MemoryStore{} : load_snapshot_file(snap_in);
    fs::create_directories(snap_out_dir);
    write_text(fs::path(snap_out_dir) / "memory_snapshot.json", store.snapshot_bytes());
    std::cout << snapshot_overview(store).dump() << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "expweaver: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "expweaver: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
