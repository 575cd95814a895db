#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>
#include <vector>

#include "expweaver/memory.hpp"
#include "test_support.hpp"

using namespace expweaver;

namespace {

ExperienceDraft draft(std::string content, UnitKind kind = UnitKind::insight,
                      std::string title = "") {
  ExperienceDraft d;
  d.kind = kind;
  d.title = std::move(title);
  d.content = std::move(content);
  return d;
}

// Judge stand-in that records the prompt and generation settings it sees.
class RecordingJudge final : public PolicyBackend {
 public:
  explicit RecordingJudge(std::string reply) : reply_(std::move(reply)) {}
  Generation generate(const std::string& context_text, const GenConfig& cfg) override {
    prompts.push_back(context_text);
    temperatures.push_back(cfg.temperature);
    return {reply_, std::nullopt, "judge"};
  }
  std::string model_id() const override { return "judge"; }

  std::vector<std::string> prompts;
  std::vector<double> temperatures;

 private:
  std::string reply_;
};

Trajectory tiny_trajectory(int outcome) {
  Trajectory traj;
  traj.task = fixtures::make_task("src-1", EnvKind::household, 3, "heat some apple.");
  traj.strategy.kind = StrategyKind::no_experience;
  Step s;
  s.index = 0;
  s.reasoning = "find it";
  s.action = "go to fridge 1";
  s.observation = "The fridge 1 is closed.";
  s.terminal = true;
  s.reward = outcome;
  traj = append_step(std::move(traj), s);
  traj.outcome = outcome;
  return traj;
}

}  // namespace

TEST_CASE("profile parameter tables") {
  FrameworkProfile rb = FrameworkProfile::reasoningbank();
  CHECK(rb.retrieval_k == 3);
  CHECK(rb.similarity_threshold == 0.0);
  CHECK(rb.retrieval_enabled);
  CHECK_FALSE(rb.frozen_at_run_start);
  CHECK(rb.distill_from == DistillFrom::success_and_failure);
  CHECK(rb.distill_kinds == std::vector<UnitKind>{UnitKind::insight});
  CHECK(rb.default_temperature == 0.7);

  FrameworkProfile awm = FrameworkProfile::awm();
  CHECK_FALSE(awm.retrieval_enabled);
  CHECK(awm.distill_from == DistillFrom::success_only);
  CHECK(awm.distill_kinds == std::vector<UnitKind>{UnitKind::workflow});
  CHECK(awm.default_temperature == 0.0);

  FrameworkProfile sk = FrameworkProfile::skillrl();
  CHECK(sk.retrieval_k == 6);
  CHECK(sk.similarity_threshold == 0.4);
  CHECK(sk.always_include_kinds == std::set<UnitKind>{UnitKind::skill_general});
  CHECK(sk.frozen_at_run_start);
  CHECK(sk.distill_kinds == std::vector<UnitKind>{UnitKind::skill_task});

  FrameworkProfile gm = FrameworkProfile::gmemory_lite();
  CHECK(gm.retrieval_k == 3);
  CHECK(gm.distill_kinds ==
        std::vector<UnitKind>{UnitKind::trajectory_digest, UnitKind::insight});

  for (ProfileId id : {ProfileId::reasoningbank, ProfileId::awm, ProfileId::skillrl,
                       ProfileId::gmemory_lite}) {
    CHECK(FrameworkProfile::for_id(id).id == id);
    CHECK(profile_id_from_string(to_string(id)) == id);
  }
  CHECK(fixtures::thrown_code([] { profile_id_from_string("bogus"); }) == Errc::config_error);
}

TEST_CASE("unit kind and outcome names round-trip") {
  for (UnitKind k : {UnitKind::insight, UnitKind::workflow, UnitKind::skill_general,
                     UnitKind::skill_task, UnitKind::trajectory_digest})
    CHECK(unit_kind_from_string(to_string(k)) == k);
  for (SourceOutcome o : {SourceOutcome::success, SourceOutcome::failure, SourceOutcome::none})
    CHECK(source_outcome_from_string(to_string(o)) == o);
  CHECK(fixtures::thrown_code([] { unit_kind_from_string("x"); }) == Errc::config_error);
  CHECK(fixtures::thrown_code([] { source_outcome_from_string("x"); }) == Errc::config_error);
}

TEST_CASE("store assigns sequential ids and dedups by content") {
  LocalEmbedder emb;
  MemoryStore store;
  CHECK(store.add(emb, draft("first insight")));
  CHECK(store.add(emb, draft("second insight")));
  CHECK(store.version() == 2);
  CHECK(store.units()[0].id == "exp-0");
  CHECK(store.units()[1].id == "exp-1");
  CHECK(store.units()[1].created_seq == 1);

  CHECK_FALSE(store.add(emb, draft("first insight", UnitKind::workflow, "other title")));
  CHECK(store.version() == 2);  // duplicate content leaves the store untouched
  CHECK(store.size() == 2);
}

TEST_CASE("stored embedding covers title and content") {
  LocalEmbedder emb;
  MemoryStore store;
  store.add(emb, draft("content words", UnitKind::insight, "title words"));
  CHECK(store.units()[0].embedding == emb.embed("title words\ncontent words"));
}

TEST_CASE("empty content and frozen stores are rejected") {
  LocalEmbedder emb;
  MemoryStore store;
  CHECK(fixtures::thrown_code([&] { store.add(emb, draft("")); }) == Errc::config_error);
  store.add(emb, draft("kept"));
  store.freeze();
  CHECK(store.frozen());
  CHECK(fixtures::thrown_code([&] { store.add(emb, draft("new")); }) == Errc::store_frozen);
  CHECK(store.size() == 1);
}

TEST_CASE("snapshot round-trips byte-identically") {
  LocalEmbedder emb;
  MemoryStore store;
  store.add(emb, draft("alpha", UnitKind::insight, "a"));
  ExperienceDraft d = draft("beta", UnitKind::workflow);
  d.source_trajectory = "task-007";
  d.source_outcome = SourceOutcome::success;
  store.add(emb, d);

  std::string bytes = store.snapshot_bytes();
  CHECK(bytes.back() == '\n');
  MemoryStore loaded = MemoryStore::load_bytes(bytes);
  CHECK(loaded == store);
  CHECK(loaded.snapshot_bytes() == bytes);
  CHECK(loaded.units()[1].source_trajectory == std::optional<std::string>("task-007"));
}

TEST_CASE("loaded stores continue the id sequence") {
  LocalEmbedder emb;
  MemoryStore store;
  store.add(emb, draft("one"));
  store.add(emb, draft("two"));
  MemoryStore loaded = MemoryStore::load_bytes(store.snapshot_bytes());
  loaded.add(emb, draft("three"));
  CHECK(loaded.units().back().id == "exp-2");
}

TEST_CASE("snapshot loading rejects bad schema and corrupt bytes") {
  CHECK(fixtures::thrown_code([] { MemoryStore::load_bytes("not json at all"); }) ==
        Errc::corrupt_snapshot);
  json doc = MemoryStore().snapshot();
  doc["schema"] = 2;
  CHECK(fixtures::thrown_code([&] { MemoryStore::load(doc); }) ==
        Errc::schema_version_mismatch);
  json missing = json{{"schema", 1}, {"version", 0}};
  CHECK(fixtures::thrown_code([&] { MemoryStore::load(missing); }) == Errc::corrupt_snapshot);
}

TEST_CASE("retrieve honours threshold, ties, and truncation") {
  LocalEmbedder emb;
  MemoryStore store;
  store.add(emb, draft("apple fridge kitchen"));
  store.add(emb, draft("apple fridge pantry"));
  store.add(emb, draft("bicycle commute downtown"));
  store.add(emb, draft("apple fridge kitchen extra"));

  FrameworkProfile profile = FrameworkProfile::reasoningbank();
  profile.retrieval_k = 2;

  auto got = retrieve(store, emb, "apple fridge", profile);
  REQUIRE(got.size() == 2);
  // Scores strictly order the two-word overlaps above the unrelated unit.
  CHECK(cosine(emb.embed("apple fridge"), got[0].embedding) >=
        cosine(emb.embed("apple fridge"), got[1].embedding));

  // With a zero query every cosine is 0: pure tie, broken by creation order.
  auto tied = retrieve(store, emb, "", profile);
  REQUIRE(tied.size() == 2);
  CHECK(tied[0].id == "exp-0");
  CHECK(tied[1].id == "exp-1");

  profile.similarity_threshold = 0.99;
  CHECK(retrieve(store, emb, "zzz unrelated", profile).empty());
}

TEST_CASE("always-include kinds bypass scoring and come first in store order") {
  LocalEmbedder emb;
  MemoryStore store;
  store.add(emb, draft("task skill apple", UnitKind::skill_task));
  store.add(emb, draft("general skill: check containers", UnitKind::skill_general));
  store.add(emb, draft("another general rule", UnitKind::skill_general));

  FrameworkProfile profile = FrameworkProfile::skillrl();
  profile.similarity_threshold = 0.0;
  auto got = retrieve(store, emb, "apple", profile);
  REQUIRE(got.size() == 3);
  CHECK(got[0].id == "exp-1");
  CHECK(got[1].id == "exp-2");
  CHECK(got[2].id == "exp-0");

  // A high threshold filters scored units but never the always-include set.
  profile.similarity_threshold = 0.999;
  auto only_general = retrieve(store, emb, "zzz", profile);
  REQUIRE(only_general.size() == 2);
  CHECK(only_general[0].kind == UnitKind::skill_general);
}

TEST_CASE("retrieve refuses profiles without a retrieval mechanism") {
  LocalEmbedder emb;
  MemoryStore store;
  CHECK(fixtures::thrown_code([&] {
          retrieve(store, emb, "q", FrameworkProfile::awm());
        }) == Errc::retrieval_disabled);
}

TEST_CASE("retrieve agrees with an independent reimplementation") {
  LocalEmbedder emb;
  MemoryStore store;
  const char* contents[] = {
      "apple in the fridge",      "plate in the cabinet",  "bread on the countertop",
      "general: look everywhere", "apple near the fridge", "cup in the sinkbasin",
  };
  for (int i = 0; i < 6; ++i)
    store.add(emb, draft(contents[i], i == 3 ? UnitKind::skill_general : UnitKind::insight));

  for (const FrameworkProfile& profile :
       {FrameworkProfile::reasoningbank(), FrameworkProfile::skillrl()}) {
    for (const char* query : {"apple fridge", "cabinet", "", "zzz"}) {
      auto got = retrieve(store, emb, query, profile);
      auto want = fixtures::brute_force_retrieve(store, emb, query, profile);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].id == want[i]);
    }
  }
}

TEST_CASE("render_units joins titled and bare units") {
  ExperienceUnit a;
  a.title = "Apples";
  a.content = "often in the fridge";
  ExperienceUnit b;
  b.content = "check the garbagecan";
  CHECK(render_units({a, b}) == "Apples: often in the fridge\ncheck the garbagecan");
  CHECK(render_units({}) == "");
}

TEST_CASE("judge prompt rendering is line-exact") {
  Trajectory traj = tiny_trajectory(1);
  CHECK(render_trajectory_for_judge(traj) ==
        "Goal: heat some apple.\n"
        "> think: find it\n"
        "> go to fridge 1\n"
        "The fridge 1 is closed.\n"
        "Outcome: success");
  CHECK(render_trajectory_for_judge(tiny_trajectory(0)).ends_with("Outcome: failure"));
}

TEST_CASE("judge replies parse into title/content pairs") {
  auto pairs = parse_judge_reply(
      "Title: Apples\nContent: usually in the fridge\n\ntitle: \nCONTENT: bare insight\r\n");
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].first == "Apples");
  CHECK(pairs[0].second == "usually in the fridge");
  CHECK(pairs[1].first == "");  // empty titles are allowed
  CHECK(pairs[1].second == "bare insight");
}

TEST_CASE("malformed judge replies raise format errors") {
  auto code = [](const char* reply) {
    return fixtures::thrown_code([&] { parse_judge_reply(reply); });
  };
  CHECK(code("Content: orphan") == Errc::judge_format_error);
  CHECK(code("Title: dangling") == Errc::judge_format_error);
  CHECK(code("Title: a\nTitle: b\nContent: c") == Errc::judge_format_error);
  CHECK(code("Title: a\nContent:") == Errc::judge_format_error);
  CHECK(code("free prose") == Errc::judge_format_error);
  CHECK(code("") == Errc::judge_format_error);
}

TEST_CASE("distill prompts the judge at temperature zero with the profile template") {
  RecordingJudge judge("Title: A\nContent: first\nTitle: B\nContent: second");
  Trajectory traj = tiny_trajectory(1);

  auto drafts = distill(traj, FrameworkProfile::gmemory_lite(), judge);
  REQUIRE(drafts.size() == 2);
  CHECK(drafts[0].kind == UnitKind::trajectory_digest);
  CHECK(drafts[1].kind == UnitKind::insight);  // later drafts reuse the last kind
  CHECK(drafts[0].source_trajectory == std::optional<std::string>("src-1"));
  CHECK(drafts[0].source_outcome == SourceOutcome::success);

  REQUIRE(judge.temperatures.size() == 1);
  CHECK(judge.temperatures[0] == 0.0);
  std::string expected_prefix = std::string(assets::kDigestTemplate);
  CHECK(judge.prompts[0].substr(0, expected_prefix.size()) == expected_prefix);
  CHECK(judge.prompts[0].find("Goal: heat some apple.") != std::string::npos);
}

TEST_CASE("success-only profiles skip failed trajectories without consulting the judge") {
  RecordingJudge judge("Title: A\nContent: x");
  auto drafts = distill(tiny_trajectory(0), FrameworkProfile::awm(), judge);
  CHECK(drafts.empty());
  CHECK(judge.prompts.empty());

  auto kept = distill(tiny_trajectory(0), FrameworkProfile::reasoningbank(), judge);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].source_outcome == SourceOutcome::failure);
}

TEST_CASE("commit_episode is atomic when the judge reply is malformed") {
  LocalEmbedder emb;
  MemoryStore store;
  store.add(emb, draft("pre-existing"));
  std::uint64_t version = store.version();

  RecordingJudge bad("no structure here");
  CHECK(fixtures::thrown_code([&] {
          commit_episode(store, tiny_trajectory(1), FrameworkProfile::reasoningbank(), bad,
                         emb);
        }) == Errc::judge_format_error);
  CHECK(store.version() == version);
  CHECK(store.size() == 1);
}

TEST_CASE("commit_episode adds drafts and counts deduplicated units once") {
  LocalEmbedder emb;
  MemoryStore store;
  RecordingJudge judge("Title: A\nContent: same text\nTitle: B\nContent: same text");
  std::size_t added =
      commit_episode(store, tiny_trajectory(1), FrameworkProfile::reasoningbank(), judge, emb);
  CHECK(added == 1);
  CHECK(store.size() == 1);

  store.freeze();
  CHECK(fixtures::thrown_code([&] {
          commit_episode(store, tiny_trajectory(1), FrameworkProfile::reasoningbank(), judge,
                         emb);
        }) == Errc::store_frozen);
}
