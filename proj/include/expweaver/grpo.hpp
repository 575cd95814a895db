#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "expweaver/core.hpp"
#include "expweaver/errors.hpp"

// Group-relative policy arithmetic over logged samples: advantages from
// intra-group normalized rewards, the clipped surrogate, the KL penalty, and
// the combined objective value. Pure functions, no gradients.

namespace expweaver {

struct GroupSample {
  double reward = 0.0;               // binary {0, 1}
  std::vector<double> token_ratios;  // new/old probability ratio per token
  std::vector<double> logp_new;      // per-token log-probs under the new policy
  std::vector<double> logp_ref;      // per-token log-probs under the reference
};

inline void validate(const GroupSample& s) {
  if (s.reward != 0.0 && s.reward != 1.0)
    throw_error(Errc::config_error, "sample reward must be 0 or 1");
  if (s.token_ratios.empty())
    throw_error(Errc::config_error, "sample needs at least one token ratio");
  for (double r : s.token_ratios)
    if (!(r > 0.0)) throw_error(Errc::non_positive_ratio, "token ratio must be > 0");
  if (s.logp_new.size() != s.token_ratios.size() ||
      s.logp_ref.size() != s.token_ratios.size())
    throw_error(Errc::length_mismatch, "logp lists must match the ratio list length");
}

inline void to_json(json& j, const GroupSample& s) {
  j = json{{"reward", s.reward},
           {"token_ratios", s.token_ratios},
           {"logp_new", s.logp_new},
           {"logp_ref", s.logp_ref}};
}

inline void from_json(const json& j, GroupSample& s) {
  j.at("reward").get_to(s.reward);
  j.at("token_ratios").get_to(s.token_ratios);
  j.at("logp_new").get_to(s.logp_new);
  j.at("logp_ref").get_to(s.logp_ref);
}

struct GrpoConfig {
  double epsilon = 0.2;  // clip width; unstated in the source setup, PPO default
  double beta = 0.01;
  int group_size = 8;
  double std_stabilizer = 1e-8;
};

inline void validate(const GrpoConfig& cfg) {
  if (!(cfg.epsilon > 0.0)) throw_error(Errc::config_error, "epsilon must be > 0");
  if (cfg.beta < 0.0) throw_error(Errc::config_error, "beta must be >= 0");
  if (cfg.group_size < 2) throw_error(Errc::group_too_small, "group size must be >= 2");
  if (!(cfg.std_stabilizer >= 0.0))
    throw_error(Errc::config_error, "std stabilizer must be >= 0");
}

// A_i = (R_i − mean) / (population std + stabilizer).
inline std::vector<double> group_advantages(const std::vector<double>& rewards,
                                            double stabilizer = 1e-8) {
  if (rewards.size() < 2)
    throw_error(Errc::group_too_small,
                "advantage normalization needs >= 2 rewards, got " +
                    std::to_string(rewards.size()));
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(rewards.size());
  double denom = std::sqrt(var) + stabilizer;
  std::vector<double> advantages;
  advantages.reserve(rewards.size());
  for (double r : rewards) advantages.push_back((r - mean) / denom);
  return advantages;
}

// min(r·A, clip(r, 1−ε, 1+ε)·A)
inline double clipped_term(double ratio, double advantage, double epsilon) {
  if (!(ratio > 0.0)) throw_error(Errc::non_positive_ratio, "ratio must be > 0");
  if (!(epsilon > 0.0)) throw_error(Errc::config_error, "epsilon must be > 0");
  double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

// k3 estimator, mean over tokens of exp(δ) − δ − 1 with δ = logp_ref − logp_new.
// Non-negative by convexity, exactly zero for identical policies.
inline double kl_penalty(const std::vector<double>& logp_new,
                         const std::vector<double>& logp_ref) {
  if (logp_new.empty() || logp_new.size() != logp_ref.size())
    throw_error(Errc::length_mismatch, "logp lists must be non-empty and equal length");
  double sum = 0.0;
  for (std::size_t i = 0; i < logp_new.size(); ++i) {
    double delta = logp_ref[i] - logp_new[i];
    sum += std::exp(delta) - delta - 1.0;
  }
  return sum / static_cast<double>(logp_new.size());
}

// (1/G) Σ_i mean_t clipped(r_{i,t}, A_i) − β · mean_i KL_i, with the
// trajectory-level advantage broadcast to every token of that trajectory.
inline double objective(const std::vector<GroupSample>& samples, const GrpoConfig& cfg = {}) {
  validate(cfg);
  if (samples.size() != static_cast<std::size_t>(cfg.group_size))
    throw_error(Errc::config_error,
                "expected " + std::to_string(cfg.group_size) + " samples, got " +
                    std::to_string(samples.size()));
  std::vector<double> rewards;
  rewards.reserve(samples.size());
  for (const auto& s : samples) {
    validate(s);
    rewards.push_back(s.reward);
  }
  std::vector<double> advantages = group_advantages(rewards, cfg.std_stabilizer);

  double surrogate = 0.0;
  double kl = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double token_mean = 0.0;
    for (double r : samples[i].token_ratios)
      token_mean += clipped_term(r, advantages[i], cfg.epsilon);
    surrogate += token_mean / static_cast<double>(samples[i].token_ratios.size());
    kl += kl_penalty(samples[i].logp_new, samples[i].logp_ref);
  }
  double g = static_cast<double>(samples.size());
  return surrogate / g - cfg.beta * (kl / g);
}

inline std::vector<GroupSample> read_group_samples_jsonl(std::istream& in) {
  std::vector<GroupSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      samples.push_back(json::parse(line).get<GroupSample>());
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw_error(Errc::corrupt_snapshot,
                  "bad sample at line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return samples;
}

inline std::vector<GroupSample> read_group_samples_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_error(Errc::config_error, "cannot open " + path);
  return read_group_samples_jsonl(in);
}

}  // namespace expweaver
