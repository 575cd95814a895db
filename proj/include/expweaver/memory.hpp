#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "expweaver/assets.hpp"
#include "expweaver/core.hpp"
#include "expweaver/embedder.hpp"
#include "expweaver/errors.hpp"
#include "expweaver/policy.hpp"

// The experience repository M: storage, top-k retrieval, distillation of
// trajectories into experience units, and the per-framework update rules.

namespace expweaver {

enum class UnitKind { insight, workflow, skill_general, skill_task, trajectory_digest };

inline std::string to_string(UnitKind kind) {
  switch (kind) {
    case UnitKind::insight: return "insight";
    case UnitKind::workflow: return "workflow";
    case UnitKind::skill_general: return "skill_general";
    case UnitKind::skill_task: return "skill_task";
    case UnitKind::trajectory_digest: return "trajectory_digest";
  }
  return "insight";
}

inline UnitKind unit_kind_from_string(std::string_view s) {
  if (s == "insight") return UnitKind::insight;
  if (s == "workflow") return UnitKind::workflow;
  if (s == "skill_general") return UnitKind::skill_general;
  if (s == "skill_task") return UnitKind::skill_task;
  if (s == "trajectory_digest") return UnitKind::trajectory_digest;
  throw_error(Errc::config_error, "unknown unit kind \"" + std::string(s) + "\"");
}

enum class SourceOutcome { success, failure, none };

inline std::string to_string(SourceOutcome o) {
  switch (o) {
    case SourceOutcome::success: return "success";
    case SourceOutcome::failure: return "failure";
    case SourceOutcome::none: return "none";
  }
  return "none";
}

inline SourceOutcome source_outcome_from_string(std::string_view s) {
  if (s == "success") return SourceOutcome::success;
  if (s == "failure") return SourceOutcome::failure;
  if (s == "none") return SourceOutcome::none;
  throw_error(Errc::config_error, "unknown source outcome \"" + std::string(s) + "\"");
}

struct ExperienceUnit {
  std::string id;  // derived from created_seq, unique within a store
  UnitKind kind = UnitKind::insight;
  std::string title;
  std::string content;
  EmbeddingVector embedding;  // embed(title + "\n" + content)
  std::optional<std::string> source_trajectory;
  SourceOutcome source_outcome = SourceOutcome::none;
  std::uint64_t created_seq = 0;
};

// A distilled unit before the store assigns id and created_seq.
struct ExperienceDraft {
  UnitKind kind = UnitKind::insight;
  std::string title;
  std::string content;
  std::optional<std::string> source_trajectory;
  SourceOutcome source_outcome = SourceOutcome::none;
};

// ---------------------------------------------------------------------------
// Framework profiles

enum class ProfileId { reasoningbank, awm, skillrl, gmemory_lite };

inline std::string to_string(ProfileId id) {
  switch (id) {
    case ProfileId::reasoningbank: return "reasoningbank";
    case ProfileId::awm: return "awm";
    case ProfileId::skillrl: return "skillrl";
    case ProfileId::gmemory_lite: return "gmemory_lite";
  }
  return "reasoningbank";
}

inline ProfileId profile_id_from_string(std::string_view s) {
  if (s == "reasoningbank") return ProfileId::reasoningbank;
  if (s == "awm") return ProfileId::awm;
  if (s == "skillrl") return ProfileId::skillrl;
  if (s == "gmemory_lite") return ProfileId::gmemory_lite;
  throw_error(Errc::config_error, "unknown profile \"" + std::string(s) + "\"");
}

enum class DistillFrom { success_only, success_and_failure };

// Retrieval and update rules of one emulated framework.
struct FrameworkProfile {
  ProfileId id = ProfileId::reasoningbank;
  int retrieval_k = 3;
  double similarity_threshold = 0.0;
  std::set<UnitKind> always_include_kinds;
  DistillFrom distill_from = DistillFrom::success_and_failure;
  bool retrieval_enabled = true;
  bool frozen_at_run_start = false;
  // Kinds assigned to distilled units: draft i gets kind
  // distill_kinds[min(i, size-1)].
  std::vector<UnitKind> distill_kinds{UnitKind::insight};
  std::string_view distill_template = assets::kInsightTemplate;
  double default_temperature = 0.0;

  static FrameworkProfile reasoningbank() {
    FrameworkProfile p;
    p.id = ProfileId::reasoningbank;
    p.retrieval_k = 3;
    p.similarity_threshold = 0.0;
    p.distill_from = DistillFrom::success_and_failure;
    p.retrieval_enabled = true;
    p.distill_kinds = {UnitKind::insight};
    p.distill_template = assets::kInsightTemplate;
    p.default_temperature = 0.7;
    return p;
  }

  // No retrieval mechanism: every stored workflow is injected wholesale.
  static FrameworkProfile awm() {
    FrameworkProfile p;
    p.id = ProfileId::awm;
    p.retrieval_enabled = false;
    p.distill_from = DistillFrom::success_only;
    p.distill_kinds = {UnitKind::workflow};
    p.distill_template = assets::kWorkflowTemplate;
    p.default_temperature = 0.0;
    return p;
  }

  // Pre-constructed skill library, fixed during evaluation; general skills
  // are always included alongside the top-6 task-specific matches.
  static FrameworkProfile skillrl() {
    FrameworkProfile p;
    p.id = ProfileId::skillrl;
    p.retrieval_k = 6;
    p.similarity_threshold = 0.4;
    p.always_include_kinds = {UnitKind::skill_general};
    p.distill_from = DistillFrom::success_and_failure;
    p.retrieval_enabled = true;
    p.frozen_at_run_start = true;
    p.distill_kinds = {UnitKind::skill_task};
    p.distill_template = assets::kSkillTemplate;
    p.default_temperature = 0.7;
    return p;
  }

  // Flat stand-in for G-Memory: trajectory digests plus insights.
  static FrameworkProfile gmemory_lite() {
    FrameworkProfile p;
    p.id = ProfileId::gmemory_lite;
    p.retrieval_k = 3;
    p.similarity_threshold = 0.0;
    p.distill_from = DistillFrom::success_and_failure;
    p.retrieval_enabled = true;
    p.distill_kinds = {UnitKind::trajectory_digest, UnitKind::insight};
    p.distill_template = assets::kDigestTemplate;
    p.default_temperature = 0.7;
    return p;
  }

  static FrameworkProfile for_id(ProfileId id) {
    switch (id) {
      case ProfileId::reasoningbank: return reasoningbank();
      case ProfileId::awm: return awm();
      case ProfileId::skillrl: return skillrl();
      case ProfileId::gmemory_lite: return gmemory_lite();
    }
    return reasoningbank();
  }
};

// ---------------------------------------------------------------------------
// Store

class MemoryStore {
 public:
  MemoryStore() = default;

  const std::vector<ExperienceUnit>& units() const { return units_; }
  std::uint64_t version() const { return version_; }
  bool frozen() const { return frozen_; }
  std::size_t size() const { return units_.size(); }

  void freeze() { frozen_ = true; }

  // Appends a unit unless one with byte-identical content already exists.
  // Returns true when the store changed (version bumps only then).
  bool add(const Embedder& embedder, ExperienceDraft draft) {
    if (frozen_) throw_error(Errc::store_frozen, "store is frozen");
    if (draft.content.empty()) throw_error(Errc::config_error, "unit content must be non-empty");
    for (const auto& unit : units_)
      if (unit.content == draft.content) return false;
    ExperienceUnit unit;
    unit.created_seq = next_seq_++;
    unit.id = "exp-" + std::to_string(unit.created_seq);
    unit.kind = draft.kind;
    unit.title = std::move(draft.title);
    unit.content = std::move(draft.content);
    unit.embedding = embedder.embed(unit.title + "\n" + unit.content);
    unit.source_trajectory = std::move(draft.source_trajectory);
    unit.source_outcome = draft.source_outcome;
    units_.push_back(std::move(unit));
    ++version_;
    return true;
  }

  // Snapshot schema: {schema: 1, version, frozen, units: [...]}.
  json snapshot() const {
    json units = json::array();
    for (const auto& u : units_) {
      json item{{"id", u.id},
                {"kind", to_string(u.kind)},
                {"title", u.title},
                {"content", u.content},
                {"embedding", u.embedding.values},
                {"source_outcome", to_string(u.source_outcome)},
                {"created_seq", u.created_seq}};
      if (u.source_trajectory) item["source_trajectory"] = *u.source_trajectory;
      units.push_back(std::move(item));
    }
    return json{{"schema", 1}, {"version", version_}, {"frozen", frozen_}, {"units", units}};
  }

  std::string snapshot_bytes() const { return snapshot().dump(2) + "\n"; }

  static MemoryStore load(const json& doc) {
    try {
      if (doc.at("schema").get<int>() != 1)
        throw_error(Errc::schema_version_mismatch,
                    "snapshot schema " + doc.at("schema").dump() + " unsupported");
      MemoryStore store;
      store.version_ = doc.at("version").get<std::uint64_t>();
      store.frozen_ = doc.at("frozen").get<bool>();
      for (const auto& item : doc.at("units")) {
        ExperienceUnit u;
        u.id = item.at("id").get<std::string>();
        u.kind = unit_kind_from_string(item.at("kind").get<std::string>());
        u.title = item.at("title").get<std::string>();
        u.content = item.at("content").get<std::string>();
        u.embedding.values = item.at("embedding").get<std::vector<double>>();
        u.source_outcome = source_outcome_from_string(item.at("source_outcome").get<std::string>());
        u.created_seq = item.at("created_seq").get<std::uint64_t>();
        if (item.contains("source_trajectory") && !item.at("source_trajectory").is_null())
          u.source_trajectory = item.at("source_trajectory").get<std::string>();
        store.next_seq_ = std::max(store.next_seq_, u.created_seq + 1);
        store.units_.push_back(std::move(u));
      }
      return store;
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw_error(Errc::corrupt_snapshot, e.what());
    }
  }

  static MemoryStore load_bytes(const std::string& bytes) {
    json doc;
    try {
      doc = json::parse(bytes);
    } catch (const std::exception& e) {
      throw_error(Errc::corrupt_snapshot, e.what());
    }
    return load(doc);
  }

  friend bool operator==(const MemoryStore& a, const MemoryStore& b) {
    if (a.version_ != b.version_ || a.frozen_ != b.frozen_ ||
        a.units_.size() != b.units_.size())
      return false;
    for (std::size_t i = 0; i < a.units_.size(); ++i) {
      const auto& x = a.units_[i];
      const auto& y = b.units_[i];
      if (x.id != y.id || x.kind != y.kind || x.title != y.title || x.content != y.content ||
          !(x.embedding == y.embedding) || x.source_trajectory != y.source_trajectory ||
          x.source_outcome != y.source_outcome || x.created_seq != y.created_seq)
        return false;
    }
    return true;
  }

 private:
  std::vector<ExperienceUnit> units_;
  std::uint64_t version_ = 0;
  bool frozen_ = false;
  std::uint64_t next_seq_ = 0;
};

// ---------------------------------------------------------------------------
// Retrieval

// Top-k retrieval with cosine scoring. Candidates outside always_include
// kinds are filtered by the similarity threshold, sorted by cosine descending
// (ties: older unit first), truncated to k; always-include units are then
// prepended in creation order. Never mutates the store.
inline std::vector<ExperienceUnit> retrieve(const MemoryStore& store, const Embedder& embedder,
                                            const std::string& query_text,
                                            const FrameworkProfile& profile) {
  if (!profile.retrieval_enabled)
    throw_error(Errc::retrieval_disabled,
                "profile " + to_string(profile.id) + " has no retrieval mechanism");
  EmbeddingVector query = embedder.embed(query_text);

  std::vector<std::pair<double, const ExperienceUnit*>> scored;
  for (const auto& unit : store.units()) {
    if (profile.always_include_kinds.count(unit.kind)) continue;
    double score = cosine(query, unit.embedding);
    if (score >= profile.similarity_threshold) scored.emplace_back(score, &unit);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second->created_seq < b.second->created_seq;
  });
  if (scored.size() > static_cast<std::size_t>(profile.retrieval_k))
    scored.resize(static_cast<std::size_t>(profile.retrieval_k));

  std::vector<ExperienceUnit> result;
  for (const auto& unit : store.units())
    if (profile.always_include_kinds.count(unit.kind)) result.push_back(unit);
  for (const auto& [score, unit] : scored) result.push_back(*unit);
  return result;
}

// Rendered block content for a list of retrieved units (no delimiters).
inline std::string render_units(const std::vector<ExperienceUnit>& units) {
  std::string out;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (i > 0) out += '\n';
    if (!units[i].title.empty()) {
      out += units[i].title;
      out += ": ";
    }
    out += units[i].content;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Distillation

// Deterministic rendering of a finished trajectory for the judge prompt.
inline std::string render_trajectory_for_judge(const Trajectory& traj) {
  std::ostringstream out;
  out << "Goal: " << traj.task.goal_text << '\n';
  for (const auto& step : traj.steps) {
    out << "> think: " << step.reasoning << '\n';
    out << "> " << step.action << '\n';
    out << step.observation << '\n';
  }
  out << "Outcome: " << (traj.outcome == 1 ? "success" : "failure");
  return out.str();
}

namespace detail {

inline bool consume_prefix(const std::string& line, std::string_view prefix, std::string& rest) {
  if (line.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(line[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i])))
      return false;
  rest = line.substr(prefix.size());
  while (!rest.empty() && rest.front() == ' ') rest.erase(rest.begin());
  return true;
}

}  // namespace detail

// Parses a judge reply into (title, content) pairs. Expected shape per unit:
//   Title: <one line>
//   Content: <one line>
inline std::vector<std::pair<std::string, std::string>> parse_judge_reply(
    const std::string& reply) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream in(reply);
  std::string line;
  std::optional<std::string> pending_title;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string rest;
    if (detail::consume_prefix(line, "Title:", rest)) {
      if (pending_title)
        throw_error(Errc::judge_format_error, "Title without matching Content");
      pending_title = rest;
    } else if (detail::consume_prefix(line, "Content:", rest)) {
      if (!pending_title)
        throw_error(Errc::judge_format_error, "Content without preceding Title");
      if (rest.empty()) throw_error(Errc::judge_format_error, "empty Content line");
      pairs.emplace_back(std::move(*pending_title), std::move(rest));
      pending_title.reset();
    } else {
      throw_error(Errc::judge_format_error, "unexpected line \"" + line + "\"");
    }
  }
  if (pending_title) throw_error(Errc::judge_format_error, "trailing Title without Content");
  if (pairs.empty()) throw_error(Errc::judge_format_error, "reply contains no units");
  return pairs;
}

// Profile-gated distillation. success_only profiles yield nothing on failed
// trajectories; otherwise the judge is prompted with the profile's template
// plus the rendered trajectory and each returned pair becomes one draft.
inline std::vector<ExperienceDraft> distill(const Trajectory& traj,
                                            const FrameworkProfile& profile,
                                            PolicyBackend& judge) {
  if (profile.distill_from == DistillFrom::success_only && traj.outcome != 1) return {};
  std::string prompt = std::string(profile.distill_template) + "\n\n" +
                       render_trajectory_for_judge(traj);
  GenConfig cfg;
  cfg.temperature = 0.0;
  Generation reply = judge.generate(prompt, cfg);
  auto pairs = parse_judge_reply(reply.text);

  std::vector<ExperienceDraft> drafts;
  drafts.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ExperienceDraft draft;
    std::size_t kind_index = std::min(i, profile.distill_kinds.size() - 1);
    draft.kind = profile.distill_kinds[kind_index];
    draft.title = std::move(pairs[i].first);
    draft.content = std::move(pairs[i].second);
    draft.source_trajectory = traj.task.id;
    draft.source_outcome = traj.outcome == 1 ? SourceOutcome::success : SourceOutcome::failure;
    drafts.push_back(std::move(draft));
  }
  return drafts;
}

// Distill-then-add, atomic: drafts are produced (and the judge reply parsed)
// before any unit lands in the store.
inline std::size_t commit_episode(MemoryStore& store, const Trajectory& traj,
                                  const FrameworkProfile& profile, PolicyBackend& judge,
                                  const Embedder& embedder) {
  if (store.frozen()) throw_error(Errc::store_frozen, "store is frozen");
  std::vector<ExperienceDraft> drafts = distill(traj, profile, judge);
  std::size_t added = 0;
  for (auto& draft : drafts)
    if (store.add(embedder, std::move(draft))) ++added;
  return added;
}

}  // namespace expweaver
