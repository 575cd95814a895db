#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "expweaver/core.hpp"
#include "expweaver/errors.hpp"

// Text-generation abstraction plus trigger-token parsing and the two-phase
// reasoning -> action scheme every utilization strategy is built on.

namespace expweaver {

// The token a reasoning trace emits to request retrieval mid-decision.
// Matching is case-insensitive, so "[Retrieve]" and "[RETRIEVE]" both fire.
inline constexpr std::string_view kTriggerToken = "[retrieve]";

struct GenConfig {
  double temperature = 0.0;
  int max_tokens = 512;
  bool request_logprobs = false;
  int top_logprobs_k = 0;  // in [0, 20]
};

struct Generation {
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  std::string model_id;
};

class PolicyBackend {
 public:
  virtual ~PolicyBackend() = default;
  virtual Generation generate(const std::string& context_text, const GenConfig& cfg) = 0;
  virtual std::string model_id() const = 0;
};

// ---------------------------------------------------------------------------
// Scripted backend

// One rule of a deterministic script. synthetic_distributions, when present,
// carries one full next-token distribution per generated token; the first
// entry of each distribution is the token that was "generated".
struct ScriptRule {
  std::string pattern;
  std::string response;
  std::optional<std::vector<std::vector<std::pair<std::string, double>>>> synthetic_distributions;
};

// First-match-wins substring lookup over the rendered context. Stateless
// after construction and therefore bit-deterministic.
class ScriptedBackend final : public PolicyBackend {
 public:
  explicit ScriptedBackend(std::vector<ScriptRule> rules, std::string model_id = "scripted")
      : rules_(std::move(rules)), model_id_(std::move(model_id)) {
    std::unordered_set<std::string> seen;
    for (const auto& rule : rules_) {
      if (!seen.insert(rule.pattern).second)
        throw_error(Errc::config_error, "duplicate script pattern \"" + rule.pattern + "\"");
      if (rule.synthetic_distributions) validate_distributions(*rule.synthetic_distributions);
    }
  }

  Generation generate(const std::string& context_text, const GenConfig& cfg) override {
    for (const auto& rule : rules_) {
      if (context_text.find(rule.pattern) == std::string::npos) continue;
      Generation gen{rule.response, std::nullopt, model_id_};
      if (cfg.request_logprobs && rule.synthetic_distributions)
        gen.token_logprobs = to_logprobs(*rule.synthetic_distributions);
      return gen;
    }
    throw_error(Errc::no_script_match, "no rule matches context (" +
                                           std::to_string(context_text.size()) + " bytes)");
  }

  std::string model_id() const override { return model_id_; }

 private:
  static void validate_distributions(
      const std::vector<std::vector<std::pair<std::string, double>>>& dists) {
    for (const auto& dist : dists) {
      if (dist.empty())
        throw_error(Errc::config_error, "synthetic distribution must be non-empty");
      double mass = 0.0;
      for (const auto& [tok, p] : dist) {
        if (p <= 0.0 || p > 1.0)
          throw_error(Errc::config_error, "synthetic probability out of (0, 1]");
        mass += p;
      }
      if (mass > 1.0 + 1e-9)
        throw_error(Errc::config_error, "synthetic distribution mass exceeds 1");
    }
  }

  static std::vector<TokenLogprob> to_logprobs(
      const std::vector<std::vector<std::pair<std::string, double>>>& dists) {
    std::vector<TokenLogprob> out;
    out.reserve(dists.size());
    for (const auto& dist : dists) {
      TokenLogprob t;
      t.token = dist.front().first;
      t.logprob = std::log(dist.front().second);
      for (std::size_t i = 1; i < dist.size(); ++i)
        t.top_alternatives.emplace_back(dist[i].first, std::log(dist[i].second));
      out.push_back(std::move(t));
    }
    return out;
  }

  std::vector<ScriptRule> rules_;
  std::string model_id_;
};

// ---------------------------------------------------------------------------
// Trigger parsing

struct TriggerParse {
  bool fired = false;
  std::string cleaned;
};

namespace detail {

inline std::size_t find_trigger(const std::string& text, std::size_t from) {
  const std::size_t n = kTriggerToken.size();
  if (text.size() < n) return std::string::npos;
  for (std::size_t i = from; i + n <= text.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < n; ++k) {
      if (std::tolower(static_cast<unsigned char>(text[i + k])) != kTriggerToken[k]) {
        match = false;
        break;
      }
    }
    if (match) return i;
  }
  return std::string::npos;
}

// Erase [lo, hi) and normalize whitespace at the splice point: runs touching
// the cut collapse to a single space, or vanish at either end of the string.
inline void splice_out(std::string& text, std::size_t lo, std::size_t hi) {
  while (lo > 0 && std::isspace(static_cast<unsigned char>(text[lo - 1]))) --lo;
  while (hi < text.size() && std::isspace(static_cast<unsigned char>(text[hi]))) ++hi;
  std::string glue;
  if (lo > 0 && hi < text.size()) glue = " ";
  text.replace(lo, hi - lo, glue);
}

}  // namespace detail

// Detects the trigger token (case-folded). All occurrences are spliced out of
// the cleaned text so that re-parsing any cleaned output never fires; a step
// still performs at most one retrieval no matter how many tokens appeared.
inline TriggerParse parse_trigger(const std::string& reasoning) {
  TriggerParse result{false, reasoning};
  for (;;) {
    std::size_t pos = detail::find_trigger(result.cleaned, 0);
    if (pos == std::string::npos) break;
    result.fired = true;
    detail::splice_out(result.cleaned, pos, pos + kTriggerToken.size());
  }
  return result;
}

// ---------------------------------------------------------------------------
// Two-phase generation

struct TwoPhaseResult {
  std::string reasoning;  // phase-1 output with the trigger token stripped
  bool trigger_fired = false;
  std::string action;
  std::optional<std::vector<TokenLogprob>> reasoning_logprobs;
};

// The display form a reasoning trace takes inside the prompt and history.
inline std::string format_reasoning_line(const std::string& reasoning) {
  return "> think: " + reasoning;
}

inline ContextSegment make_reasoning_segment(const std::string& reasoning,
                                             std::optional<int> origin_step) {
  return {SegmentKind::reasoning_trace, format_reasoning_line(reasoning), origin_step, {}, {}};
}

inline ContextSegment make_experience_segment(std::string content,
                                              std::vector<std::string> unit_ids,
                                              std::optional<int> origin_step) {
  return {SegmentKind::experience_block, std::move(content), origin_step, std::move(unit_ids), {}};
}

// Phase 1: produce the reasoning trace h_t from the current context.
inline Generation reasoning_phase(PolicyBackend& backend, const Context& ctx,
                                  const GenConfig& cfg) {
  return backend.generate(ctx.render(), cfg);
}

// Phase 2: produce the action from context + reasoning trace + optional
// injected experience. `inject`, when present, is the raw block content
// (may be empty: the delimiters are still rendered, with zero bytes between).
inline Generation action_phase(PolicyBackend& backend, const Context& ctx,
                               const std::string& cleaned_reasoning,
                               const std::optional<std::string>& inject, const GenConfig& cfg) {
  std::vector<ContextSegment> segments = ctx.segments();
  segments.push_back(make_reasoning_segment(cleaned_reasoning, std::nullopt));
  if (inject) segments.push_back(make_experience_segment(*inject, {}, std::nullopt));
  return backend.generate(render_context(segments), cfg);
}

// Composed two-phase step for callers that know the injection up front.
// Phase-1 reasoning is preserved verbatim (minus the trigger token) in the
// phase-2 prompt.
inline TwoPhaseResult two_phase_generate(PolicyBackend& backend, const Context& ctx,
                                         const GenConfig& cfg,
                                         const std::optional<std::string>& inject = std::nullopt) {
  Generation phase1 = reasoning_phase(backend, ctx, cfg);
  TriggerParse parsed = parse_trigger(phase1.text);
  Generation phase2 = action_phase(backend, ctx, parsed.cleaned, inject, cfg);
  return {parsed.cleaned, parsed.fired, phase2.text, std::move(phase1.token_logprobs)};
}

}  // namespace expweaver
