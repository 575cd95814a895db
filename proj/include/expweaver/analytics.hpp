#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "expweaver/core.hpp"
#include "expweaver/errors.hpp"

// Measurement procedures over trajectory logs: retrievals-per-sample,
// temporal invocation fractions, token-entropy series, and the
// entropy-vs-trigger alignment report. Everything here is read-only.

namespace expweaver {

struct UsageReport {
  std::size_t n_trajectories = 0;
  double retrievals_per_sample = 0.0;
  double avg_trajectory_length = 0.0;
  std::vector<double> per_step_fraction;  // length = max trajectory length
};

inline void to_json(json& j, const UsageReport& r) {
  j = json{{"n_trajectories", r.n_trajectories},
           {"retrievals_per_sample", r.retrievals_per_sample},
           {"avg_trajectory_length", r.avg_trajectory_length},
           {"per_step_fraction", r.per_step_fraction}};
}

struct EntropyReport {
  std::vector<double> per_step_mean_entropy;  // nats, index = step
  std::vector<int> trigger_steps;             // distinct step indices with a trigger
  std::optional<double> mean_entropy_at_triggers;
  std::optional<double> mean_entropy_elsewhere;
  double rank_stat = 0.0;  // fraction of trigger steps above the median step entropy
};

inline void to_json(json& j, const EntropyReport& r) {
  j = json{{"per_step_mean_entropy", r.per_step_mean_entropy},
           {"trigger_steps", r.trigger_steps},
           {"mean_entropy_at_triggers",
            r.mean_entropy_at_triggers ? json(*r.mean_entropy_at_triggers) : json()},
           {"mean_entropy_elsewhere",
            r.mean_entropy_elsewhere ? json(*r.mean_entropy_elsewhere) : json()},
           {"rank_stat", r.rank_stat}};
}

// Total retrieval events / number of trajectories. For interwoven logs this
// equals total trigger events per trajectory.
inline double retrievals_per_sample(const std::vector<Trajectory>& log) {
  if (log.empty()) throw_error(Errc::empty_log, "trajectory log is empty");
  std::uint64_t events = 0;
  for (const auto& traj : log)
    for (const auto& step : traj.steps)
      if (step.retrieval_performed) ++events;
  return static_cast<double>(events) / static_cast<double>(log.size());
}

// Entry t = |{trajectories with a retrieval at step t}| divided by the
// active-trajectory count at t (trajectories of length > t), or by all
// trajectories when active_denominator is false.
inline std::vector<double> temporal_fraction(const std::vector<Trajectory>& log,
                                             bool active_denominator = true) {
  if (log.empty()) throw_error(Errc::empty_log, "trajectory log is empty");
  std::size_t max_len = 0;
  for (const auto& traj : log) max_len = std::max(max_len, traj.steps.size());
  std::vector<double> fractions(max_len, 0.0);
  for (std::size_t t = 0; t < max_len; ++t) {
    int active = 0;
    int invoking = 0;
    for (const auto& traj : log) {
      if (traj.steps.size() <= t) continue;
      ++active;
      if (traj.steps[t].retrieval_performed) ++invoking;
    }
    int denom = active_denominator ? active : static_cast<int>(log.size());
    fractions[t] = denom == 0 ? 0.0 : static_cast<double>(invoking) / denom;
  }
  return fractions;
}

inline UsageReport usage_report(const std::vector<Trajectory>& log,
                                bool active_denominator = true) {
  UsageReport report;
  report.n_trajectories = log.size();
  report.retrievals_per_sample = retrievals_per_sample(log);
  std::uint64_t steps = 0;
  for (const auto& traj : log) steps += traj.steps.size();
  report.avg_trajectory_length = static_cast<double>(steps) / static_cast<double>(log.size());
  report.per_step_fraction = temporal_fraction(log, active_denominator);
  return report;
}

// ---------------------------------------------------------------------------
// Token entropy

namespace detail {

inline double nlogn(double p) { return p > 0.0 ? -p * std::log(p) : 0.0; }

// Shannon entropy (nats) of one next-token distribution. Known probabilities
// contribute exactly; unreported mass is treated as a single residual bucket,
// giving a lower bound that degrades to the exact value when the known mass
// sums to 1.
inline double distribution_entropy(const TokenLogprob& t) {
  double entropy = 0.0;
  double known = std::exp(t.logprob);
  entropy += nlogn(known);
  for (const auto& [token, lp] : t.top_alternatives) {
    double p = std::exp(lp);
    known += p;
    entropy += nlogn(p);
  }
  double rest = std::clamp(1.0 - known, 0.0, 1.0);
  entropy += nlogn(rest);
  return entropy;
}

}  // namespace detail

// Mean per-token entropy over a step's generated reasoning tokens.
inline double token_entropy(const Step& step) {
  if (!step.token_logprobs || step.token_logprobs->empty())
    throw_error(Errc::no_logprobs, "step " + std::to_string(step.index) + " has no logprobs");
  double sum = 0.0;
  for (const auto& t : *step.token_logprobs) sum += detail::distribution_entropy(t);
  return sum / static_cast<double>(step.token_logprobs->size());
}

// Builds the per-step mean entropy curve and compares entropy at trigger
// steps against the rest. Steps without logprobs are skipped; the log must
// contain at least one step that carries them.
inline EntropyReport entropy_trigger_alignment(const std::vector<Trajectory>& log) {
  if (log.empty()) throw_error(Errc::empty_log, "trajectory log is empty");

  struct Scored {
    int step_index;
    bool trigger;
    double entropy;
  };
  std::vector<Scored> scored;
  for (const auto& traj : log)
    for (const auto& step : traj.steps)
      if (step.token_logprobs && !step.token_logprobs->empty())
        scored.push_back({step.index, step.trigger_fired, token_entropy(step)});
  if (scored.empty()) throw_error(Errc::no_logprobs, "log carries no token logprobs");

  EntropyReport report;
  int max_index = 0;
  for (const auto& s : scored) max_index = std::max(max_index, s.step_index);
  std::vector<double> sums(static_cast<std::size_t>(max_index) + 1, 0.0);
  std::vector<int> counts(static_cast<std::size_t>(max_index) + 1, 0);
  for (const auto& s : scored) {
    sums[static_cast<std::size_t>(s.step_index)] += s.entropy;
    ++counts[static_cast<std::size_t>(s.step_index)];
  }
  report.per_step_mean_entropy.resize(sums.size(), 0.0);
  for (std::size_t i = 0; i < sums.size(); ++i)
    if (counts[i] > 0) report.per_step_mean_entropy[i] = sums[i] / counts[i];

  double trigger_sum = 0.0;
  int trigger_count = 0;
  double other_sum = 0.0;
  int other_count = 0;
  std::vector<int> trigger_indices;
  for (const auto& s : scored) {
    if (s.trigger) {
      trigger_sum += s.entropy;
      ++trigger_count;
      trigger_indices.push_back(s.step_index);
    } else {
      other_sum += s.entropy;
      ++other_count;
    }
  }
  std::sort(trigger_indices.begin(), trigger_indices.end());
  trigger_indices.erase(std::unique(trigger_indices.begin(), trigger_indices.end()),
                        trigger_indices.end());
  report.trigger_steps = std::move(trigger_indices);
  if (trigger_count > 0) report.mean_entropy_at_triggers = trigger_sum / trigger_count;
  if (other_count > 0) report.mean_entropy_elsewhere = other_sum / other_count;

  std::vector<double> all;
  all.reserve(scored.size());
  for (const auto& s : scored) all.push_back(s.entropy);
  std::sort(all.begin(), all.end());
  double median = all.size() % 2 == 1
                      ? all[all.size() / 2]
                      : 0.5 * (all[all.size() / 2 - 1] + all[all.size() / 2]);
  if (trigger_count > 0) {
    int above = 0;
    for (const auto& s : scored)
      if (s.trigger && s.entropy > median) ++above;
    report.rank_stat = static_cast<double>(above) / trigger_count;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report emitters

inline std::string temporal_csv(const std::vector<double>& fractions) {
  std::string out = "step,fraction\n";
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%zu,%.10g\n", i, fractions[i]);
    out += buf;
  }
  return out;
}

inline std::string entropy_csv(const std::vector<double>& entropies) {
  std::string out = "step,entropy\n";
  for (std::size_t i = 0; i < entropies.size(); ++i) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%zu,%.10g\n", i, entropies[i]);
    out += buf;
  }
  return out;
}

// Minimal self-contained SVG line chart (one series over step index).
inline std::string line_chart_svg(const std::vector<double>& series, const std::string& title,
                                  const std::string& y_label) {
  const double width = 640.0;
  const double height = 360.0;
  const double margin = 48.0;
  double y_max = 1e-9;
  for (double v : series) y_max = std::max(y_max, v);

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "  <text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << title << "</text>\n";
  svg << "  <line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
      << width - margin << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  svg << "  <line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin
      << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  svg << "  <text x=\"16\" y=\"" << height / 2
      << "\" font-size=\"11\" transform=\"rotate(-90 16 " << height / 2 << ")\" "
      << "text-anchor=\"middle\">" << y_label << "</text>\n";
  svg << "  <text x=\"" << width / 2 << "\" y=\"" << height - 12
      << "\" font-size=\"11\" text-anchor=\"middle\">step</text>\n";
  if (!series.empty()) {
    double x_span = width - 2 * margin;
    double y_span = height - 2 * margin;
    double dx = series.size() > 1 ? x_span / (series.size() - 1) : 0.0;
    svg << "  <polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series.size(); ++i) {
      double x = margin + dx * i;
      double y = height - margin - (series[i] / y_max) * y_span;
      if (i > 0) svg << ' ';
      svg << x << ',' << y;
    }
    svg << "\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace expweaver
