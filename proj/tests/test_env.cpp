#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "expweaver/environments.hpp"
#include "test_support.hpp"

using namespace expweaver;
namespace fs = std::filesystem;

namespace {

HouseholdEnv golden_env() { return HouseholdEnv::from_state(fixtures::golden_state()); }

TaskSpec household_task(int max_steps = 30) {
  return fixtures::make_task("h", EnvKind::household, 7, "", max_steps);
}

}  // namespace

// ---------------------------------------------------------------------------
// Household

TEST_CASE("household reset lists receptacles and the goal verbatim") {
  HouseholdEnv env = golden_env();
  Observation obs = env.reset(fixtures::golden_task());
  CHECK(obs.text ==
        "You are in the middle of a room. Looking quickly around you, you see a cabinet 1, a "
        "cabinet 2, a fridge 1, a garbagecan 1, and a microwave 1.\nYour task is to: heat some "
        "apple and put it in garbagecan.");
  CHECK(obs.reward == 0.0);
  CHECK_FALSE(obs.terminal);
  CHECK(env.goal_text() == fixtures::kGoldenGoal);
}

TEST_CASE("household movement and inspection phrasing") {
  HouseholdEnv env = golden_env();
  env.reset(fixtures::golden_task());
  CHECK(env.step("go to garbagecan 1").text ==
        "You arrive at garbagecan 1. On the garbagecan 1, you see a apple 2, and a apple 1.");
  CHECK(env.step("go to cabinet 2").text == "You arrive at cabinet 2. The cabinet 2 is closed.");
  CHECK(env.step("open cabinet 2").text ==
        "You open the cabinet 2. The cabinet 2 is open. In it, you see a plate 1.");
  CHECK(env.step("look").text == "You look around. The cabinet 2 is open. In it, you see a "
                                 "plate 1.");
  CHECK(env.step("close cabinet 2").text == "You close the cabinet 2.");
  CHECK(env.step("inventory").text == "You are not carrying anything.");
}

TEST_CASE("household actions are case- and whitespace-normalized") {
  HouseholdEnv env = golden_env();
  env.reset(fixtures::golden_task());
  CHECK(env.step("  GO   TO \t garbagecan 1 ").text.rfind("You arrive at garbagecan 1.", 0) ==
        0);
}

TEST_CASE("household open/close guards") {
  HouseholdEnv env = golden_env();
  env.reset(fixtures::golden_task());
  CHECK(env.step("open cabinet 2").text == "Nothing happens.");   // not standing there
  CHECK(env.step("open garbagecan 1").text == "Nothing happens.");  // not openable
  env.step("go to fridge 1");
  env.step("open fridge 1");
  CHECK(env.step("open fridge 1").text == "Nothing happens.");  // already open
  env.step("close fridge 1");
  CHECK(env.step("close fridge 1").text == "Nothing happens.");  // already closed
}

TEST_CASE("household take and put mechanics") {
  HouseholdEnv env = golden_env();
  env.reset(fixtures::golden_task());
  CHECK(env.step("take apple 1 from garbagecan 1").text == "Nothing happens.");  // not there
  env.step("go to garbagecan 1");
  CHECK(env.step("take pear 1 from garbagecan 1").text == "Nothing happens.");
  CHECK(env.step("take apple 1 from garbagecan 1").text ==
        "You pick up the apple 1 from the garbagecan 1.");
  CHECK(env.step("inventory").text == "You are carrying: a apple 1.");
  CHECK(env.step("take apple 2 from garbagecan 1").text == "Nothing happens.");  // hands full
  CHECK(env.step("put apple 1 on garbagecan 1").text ==
        "You put the apple 1 on the garbagecan 1.");  // echoes the preposition
  CHECK(env.step("put apple 1 in garbagecan 1").text == "Nothing happens.");  // empty-handed
}

TEST_CASE("household closed containers block take and put") {
  HouseholdEnv env = golden_env();
  env.reset(fixtures::golden_task());
  env.step("go to cabinet 2");
  CHECK(env.step("take plate 1 from cabinet 2").text == "Nothing happens.");
  env.step("open cabinet 2");
  CHECK(env.step("take plate 1 from cabinet 2").text ==
        "You pick up the plate 1 from the cabinet 2.");
  env.step("close cabinet 2");
  CHECK(env.step("put plate 1 in cabinet 2").text == "Nothing happens.");
}

TEST_CASE("household heat requires the right appliance class and a held object") {
  HouseholdEnv env = golden_env();
  env.reset(fixtures::golden_task());
  env.step("go to garbagecan 1");
  env.step("take apple 1 from garbagecan 1");
  env.step("go to fridge 1");
  CHECK(env.step("heat apple 1 with fridge 1").text == "Nothing happens.");
  env.step("go to microwave 1");
  CHECK(env.step("heat apple 2 with microwave 1").text == "Nothing happens.");  // not held
  // The microwave is closed in this world; appliances work regardless.
  CHECK(env.step("heat apple 1 with microwave 1").text ==
        "You heat the apple 1 using the microwave 1.");
}

TEST_CASE("household goal completion appends the solved marker and ends the episode") {
  HouseholdEnv env = golden_env();
  env.reset(fixtures::golden_task());
  env.step("go to garbagecan 1");
  env.step("take apple 1 from garbagecan 1");
  env.step("go to microwave 1");
  env.step("heat apple 1 with microwave 1");
  env.step("go to garbagecan 1");
  Observation done = env.step("put apple 1 in garbagecan 1");
  CHECK(done.text == "You put the apple 1 in the garbagecan 1. Task is SOLVED.");
  CHECK(done.reward == 1.0);
  CHECK(done.terminal);
  CHECK(fixtures::thrown_code([&] { env.step("look"); }) == Errc::episode_finished);
}

TEST_CASE("household cool and clean predicates") {
  HouseholdState state = fixtures::golden_state();
  state.receptacles["sinkbasin 1"] = Receptacle{false, true, {}};
  state.goal = {"cool", "apple", "garbagecan 1"};
  HouseholdEnv env = HouseholdEnv::from_state(state);
  env.reset(fixtures::make_task("c", EnvKind::household, 1,
                                "cool some apple and put it in garbagecan."));
  env.step("go to garbagecan 1");
  env.step("take apple 1 from garbagecan 1");
  env.step("go to sinkbasin 1");
  CHECK(env.step("clean apple 1 with sinkbasin 1").text ==
        "You clean the apple 1 using the sinkbasin 1.");
  env.step("go to fridge 1");
  CHECK(env.step("cool apple 1 with fridge 1").text ==
        "You cool the apple 1 using the fridge 1.");
  env.step("go to garbagecan 1");
  CHECK(env.step("put apple 1 in garbagecan 1").terminal);
}

TEST_CASE("household episodes cut off at max_steps with zero reward") {
  HouseholdEnv env = golden_env();
  env.reset(fixtures::make_task("t", EnvKind::household, 7, fixtures::kGoldenGoal, 3));
  CHECK_FALSE(env.step("look").terminal);
  CHECK_FALSE(env.step("look").terminal);
  Observation last = env.step("look");
  CHECK(last.terminal);
  CHECK(last.reward == 0.0);
  CHECK(env.steps_taken() == 3);
}

TEST_CASE("household rejects tasks for other environments") {
  HouseholdEnv env;
  CHECK(fixtures::thrown_code([&] {
          env.reset(fixtures::make_task("t", EnvKind::shop, 1, "buy a mug."));
        }) == Errc::unknown_env_kind);
  CHECK(fixtures::thrown_code([&] { env.step("look"); }) == Errc::episode_finished);
}

TEST_CASE("household worlds are a deterministic function of the seed") {
  HouseholdEnv a, b;
  Observation oa = a.reset(household_task());
  Observation ob = b.reset(household_task());
  CHECK(oa.text == ob.text);
  CHECK(a.goal_text() == b.goal_text());
  CHECK_FALSE(goal_satisfied(a.state()));

  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 11ULL}) {
    HouseholdEnv env;
    env.reset(fixtures::make_task("t", EnvKind::household, seed));
    CHECK_FALSE(goal_satisfied(env.state()));
    std::size_t objects = 0;
    for (const auto& [name, r] : env.state().receptacles) objects += r.contents.size();
    CHECK(objects >= 8);
    CHECK(objects <= 12);
  }
}

TEST_CASE("goal phrasing drops instance numbers") {
  CHECK(household_goal_text({"heat", "apple", "garbagecan 1"}) ==
        "heat some apple and put it in garbagecan.");
  CHECK(household_goal_text({"none", "plate", "countertop 1"}) ==
        "put some plate in countertop.");
}

TEST_CASE("listing grammar always uses a-articles and a comma before and") {
  CHECK(detail::join_listing({"apple 1"}) == "a apple 1");
  CHECK(detail::join_listing({"apple 1", "cup 1"}) == "a apple 1, and a cup 1");
  CHECK(detail::join_listing({"a", "b", "c"}) == "a a, a b, and a c");
  CHECK(detail::object_class_of("apple 12") == "apple");
  CHECK(detail::object_class_of("sinkbasin") == "sinkbasin");
  CHECK(detail::object_class_of("apple pie") == "apple pie");
}

TEST_CASE("household state json round-trips") {
  HouseholdState s = fixtures::golden_state();
  s.agent_at = "fridge 1";
  s.holding = "apple 1";
  s.object_props["apple 1"].hot = true;
  json j = s;
  HouseholdState back = j.get<HouseholdState>();
  CHECK(json(back) == j);
}

// ---------------------------------------------------------------------------
// Shop

namespace {

ShopEnv preset_shop() {
  std::vector<CatalogItem> catalog;
  CatalogItem mug;
  mug.id = "B0000001";
  mug.title = "Acme red ceramic mug";
  mug.price = 12.5;
  mug.options = {{"color", {"red", "blue"}}};
  CatalogItem lamp;
  lamp.id = "B0000002";
  lamp.title = "Nova portable lamp";
  lamp.price = 30.0;
  CatalogItem shirt;
  shirt.id = "B0000003";
  shirt.title = "Cedar red cotton t-shirt";
  shirt.price = 18.0;
  shirt.options = {{"color", {"red"}}, {"size", {"small", "large"}}};
  catalog = {mug, lamp, shirt};
  ShopGoal goal{{"red", "ceramic", "mug"}, 20.0};
  return ShopEnv::from_catalog(catalog, goal,
                               "i am looking for a red ceramic mug, and price lower than "
                               "20.00 dollars.");
}

TaskSpec shop_task(std::uint64_t seed = 1) {
  return fixtures::make_task("s", EnvKind::shop, seed, "buy it.");
}

}  // namespace

TEST_CASE("shop reset shows the instruction and search box") {
  ShopEnv env = preset_shop();
  Observation obs = env.reset(shop_task());
  CHECK(obs.text ==
        "Instruction: i am looking for a red ceramic mug, and price lower than 20.00 "
        "dollars.\n[Search]");
  CHECK(env.goal_text() ==
        "i am looking for a red ceramic mug, and price lower than 20.00 dollars.");
}

TEST_CASE("shop search ranks by distinct query-word hits with catalog-order ties") {
  ShopEnv env = preset_shop();
  env.reset(shop_task());
  Observation obs = env.step("Search[red ceramic mug]");
  CHECK(obs.text ==
        "[Back to Search]\n"
        "[B0000001]\nAcme red ceramic mug\n$12.50\n"
        "[B0000003]\nCedar red cotton t-shirt\n$18.00\n"
        "[B0000002]\nNova portable lamp\n$30.00");
  // A query hitting nothing keeps catalog order.
  Observation none = env.step("Search[zzz]");
  CHECK(none.text.find("[B0000001]") < none.text.find("[B0000002]"));
  CHECK(none.text.find("[B0000002]") < none.text.find("[B0000003]"));
}

TEST_CASE("shop item pages render options, price, and buy button") {
  ShopEnv env = preset_shop();
  env.reset(shop_task());
  env.step("Search[mug]");
  Observation obs = env.step("Click[B0000001]");
  CHECK(obs.text == "color [red][blue]\nAcme red ceramic mug\nPrice: $12.50\n[Buy Now]");
  CHECK(env.step("Click[red]").text == "You have clicked red.");
  CHECK(env.step("Click[purple]").text == "Nothing happens.");
}

TEST_CASE("shop buy-now scores the selection and ends the episode") {
  ShopEnv env = preset_shop();
  env.reset(shop_task());
  CHECK(env.step("Click[Buy Now]").text == "Nothing happens.");  // no item open
  env.step("Search[mug]");
  env.step("Click[B0000001]");
  env.step("Click[red]");
  Observation done = env.step("Click[Buy Now]");
  CHECK(done.text == "Your score (min 0.0, max 1.0): 1.0");
  CHECK(done.reward == 1.0);
  CHECK(done.terminal);
}

TEST_CASE("shop partial matches earn fractional scores") {
  ShopEnv env = preset_shop();
  env.reset(shop_task());
  env.step("Click[B0000003]");  // red cotton t-shirt: 1 of 3 attrs... plus price
  Observation done = env.step("Click[Buy Now]");
  // Matched: "red" (1 of 3 attributes), price 18 <= 20, options unselected.
  CHECK(done.text == "Your score (min 0.0, max 1.0): 0.4");
  CHECK(done.reward == doctest::Approx(0.4));
  CHECK(done.terminal);
}

TEST_CASE("shop score counts attributes, price cap, and complete selections") {
  CatalogItem item;
  item.title = "Acme red ceramic mug";
  item.price = 12.5;
  item.options = {{"color", {"red", "blue"}}};
  ShopGoal goal{{"red", "ceramic", "mug"}, 20.0};
  CHECK(shop_score(item, goal) == doctest::Approx(4.0 / 5.0));
  item.selected["color"] = "red";
  CHECK(shop_score(item, goal) == doctest::Approx(1.0));
  item.price = 99.0;
  CHECK(shop_score(item, goal) == doctest::Approx(4.0 / 5.0));
  CHECK(detail::format_score(1.0) == "1.0");
  CHECK(detail::format_score(0.75) == "0.75");
  CHECK(detail::format_score(2.0 / 3.0) == "0.666667");
}

TEST_CASE("shop re-opening an item clears its selections") {
  ShopEnv env = preset_shop();
  env.reset(shop_task());
  env.step("Click[B0000001]");
  env.step("Click[red]");
  env.step("Click[Back to Search]");
  env.step("Click[B0000001]");
  Observation done = env.step("Click[Buy Now]");
  CHECK(done.text == "Your score (min 0.0, max 1.0): 0.8");
}

TEST_CASE("shop catalogs are seeded and always contain a perfect purchase") {
  for (std::uint64_t seed : {1ULL, 5ULL, 9ULL}) {
    ShopEnv a, b;
    Observation oa = a.reset(shop_task(seed));
    Observation ob = b.reset(shop_task(seed));
    CHECK(oa.text == ob.text);
    CHECK(a.catalog().size() >= 12);
    CHECK(a.catalog().size() <= 20);
    double best = 0.0;
    for (CatalogItem item : a.catalog()) {
      for (const auto& [dim, values] : item.options) item.selected[dim] = values.front();
      best = std::max(best, shop_score(item, a.goal()));
    }
    CHECK(best == doctest::Approx(1.0));
  }
}

TEST_CASE("shop malformed actions do nothing") {
  ShopEnv env = preset_shop();
  env.reset(shop_task());
  CHECK(env.step("buy the mug").text == "Nothing happens.");
  CHECK(env.step("Click[").text == "Nothing happens.");
  CHECK(env.step("Open[B0000001]").text == "Nothing happens.");
}

// ---------------------------------------------------------------------------
// Corpus QA

namespace {

QaEnv preset_qa() {
  std::vector<CorpusDoc> docs = {
      {"d0", "Paris", "Paris is the capital of France. It lies on the Seine."},
      {"d1", "Rome", "Rome is the capital of Italy."},
      {"d2", "Tokyo", "Tokyo is the capital of Japan."},
      {"d3", "Berlin", "Berlin is the capital of Germany."},
  };
  return QaEnv::from_corpus(std::move(docs), "What is the capital of France?", "Paris");
}

TaskSpec qa_task(std::uint64_t seed = 1) {
  return fixtures::make_task("q", EnvKind::corpus_qa, seed, "answer it.");
}

}  // namespace

TEST_CASE("qa reset poses the question and the action menu") {
  QaEnv env = preset_qa();
  Observation obs = env.reset(qa_task());
  CHECK(obs.text ==
        "Question: What is the capital of France?\nAvailable actions: Search[query], "
        "Finish[answer].");
  CHECK(env.goal_text() == "What is the capital of France?");
}

TEST_CASE("qa search returns the top passages by similarity") {
  QaEnv env = preset_qa();
  env.reset(qa_task());
  Observation obs = env.step("Search[capital of France Seine]");
  // The France passage shares the most words with the query.
  CHECK(obs.text.rfind("Paris is the capital of France.", 0) == 0);
  // Top three passages, double-newline separated.
  CHECK(std::count(obs.text.begin(), obs.text.end(), '\n') == 2 * 2);
  Observation empty_query = env.step("Search[]");
  CHECK(empty_query.text.find("\n\n") != std::string::npos);  // ties keep corpus order
}

TEST_CASE("qa finish grades against the gold answer") {
  QaEnv env = preset_qa();
  env.reset(qa_task());
  Observation wrong_then = env.step("Search[France]");
  CHECK_FALSE(wrong_then.terminal);
  Observation done = env.step("Finish[the PARIS ]");
  CHECK(done.text == "Correct.");
  CHECK(done.reward == 1.0);
  CHECK(done.terminal);

  QaEnv env2 = preset_qa();
  env2.reset(qa_task());
  Observation bad = env2.step("Finish[Lyon]");
  CHECK(bad.text == "Incorrect.");
  CHECK(bad.reward == 0.0);
  CHECK(bad.terminal);
}

TEST_CASE("answer normalization drops articles, case, and punctuation") {
  CHECK(normalize_answer_part(" The  Grand-Canyon! ") == "grand canyon");
  CHECK(normalize_answer_part("an apple") == "apple");
  CHECK(normalize_answer_part("") == "");
  CHECK(answer_matches("actor, director", "Director, Actor"));
  CHECK(answer_matches("Paris.", "paris"));
  CHECK_FALSE(answer_matches("Paris, Lyon", "Paris"));
  CHECK_FALSE(answer_matches("", "Paris"));
  CHECK_FALSE(answer_matches("anything", ""));  // empty gold never matches
}

TEST_CASE("qa questions are seeded deterministically with an answer in the corpus") {
  QaEnv a, b;
  Observation oa = a.reset(qa_task(4));
  CHECK(oa.text == b.reset(qa_task(4)).text);
  bool found = false;
  for (const auto& doc : a.corpus())
    if (doc.text.find(a.gold_answer()) != std::string::npos) found = true;
  CHECK(found);
  Observation done = a.step("Finish[" + a.gold_answer() + "]");
  CHECK(done.reward == 1.0);
}

TEST_CASE("corpus files load from jsonl and directories") {
  fs::path dir = fs::temp_directory_path() / "expweaver-corpus-test";
  fs::remove_all(dir);
  fs::create_directories(dir);

  std::ofstream(dir / "b.txt") << "Second doc text.";
  std::ofstream(dir / "a.txt") << "First doc text.";
  auto docs = load_corpus_dir(dir);
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].id == "a");
  CHECK(docs[0].text == "First doc text.");
  CHECK(docs[1].title == "b");

  fs::path jsonl = dir / "corpus.jsonl";
  std::ofstream(jsonl) << R"({"id":"x","title":"X","text":"Some text."})" << "\n\n"
                       << R"({"id":"y","title":"Y","text":"More text."})" << "\n";
  auto loaded = load_corpus_jsonl(jsonl);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[1].id == "y");

  std::ofstream(jsonl) << "{broken\n";
  auto code = fixtures::thrown_code([&] { load_corpus_jsonl(jsonl); });
  CHECK(code == Errc::config_error);
  CHECK(fixtures::thrown_code([&] { load_corpus_jsonl(dir / "missing.jsonl"); }) ==
        Errc::config_error);

  std::ofstream(dir / "empty.txt");
  CHECK(fixtures::thrown_code([&] { load_corpus_dir(dir); }) == Errc::config_error);
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Replay

namespace {

ReplayRecording small_recording() {
  ReplayRecording rec;
  rec.initial_observation = "You are here.";
  rec.steps = {{"go north", "You go north.", 0.0, false},
               {"open door", "The door opens. Task is SOLVED.", 1.0, true}};
  return rec;
}

TaskSpec replay_task(int max_steps = 30) {
  return fixtures::make_task("r", EnvKind::replay, 1, "reach the door.", max_steps);
}

}  // namespace

TEST_CASE("replay hands back the recorded episode step by step") {
  ReplayEnv env(small_recording());
  CHECK(env.kind() == EnvKind::replay);
  Observation obs = env.reset(replay_task());
  CHECK(obs.text == "You are here.");
  CHECK(env.step("go north").text == "You go north.");
  Observation done = env.step("open door");
  CHECK(done.text == "The door opens. Task is SOLVED.");
  CHECK(done.reward == 1.0);
  CHECK(done.terminal);
}

TEST_CASE("replay matches actions modulo whitespace but not case") {
  ReplayEnv env(small_recording());
  env.reset(replay_task());
  CHECK(env.step("  go \t north ").text == "You go north.");
  CHECK_THROWS_AS(env.step("Open Door"), DivergedFromTrace);
}

TEST_CASE("replay diverging actions raise a typed error with both strings") {
  ReplayEnv env(small_recording());
  env.reset(replay_task());
  try {
    env.step("go south");
    CHECK(false);
  } catch (const DivergedFromTrace& e) {
    CHECK(e.code() == Errc::diverged_from_trace);
    std::string msg = e.what();
    CHECK(msg.find("go north") != std::string::npos);
    CHECK(msg.find("go south") != std::string::npos);
  }
}

TEST_CASE("replay exhausting the recording raises") {
  ReplayRecording rec;
  rec.initial_observation = "start";
  rec.steps = {{"a", "obs a", 0.0, false}};
  ReplayEnv env(rec);
  env.reset(replay_task());
  env.step("a");
  // The lone step was non-terminal, so the episode is still active but the
  // recording has nothing left to play.
  CHECK(fixtures::thrown_code([&] { env.step("a"); }) == Errc::recording_exhausted);
}

TEST_CASE("replay recordings must be non-empty and round-trip through json") {
  CHECK(fixtures::thrown_code([] { ReplayEnv env{ReplayRecording{}}; }) == Errc::config_error);
  ReplayRecording rec = small_recording();
  json j = rec;
  ReplayRecording back = j.get<ReplayRecording>();
  CHECK(back.initial_observation == rec.initial_observation);
  REQUIRE(back.steps.size() == 2);
  CHECK(back.steps[1].action == "open door");
  CHECK(back.steps[1].terminal);
}

TEST_CASE("replay respects the max-steps cutoff") {
  ReplayRecording rec;
  rec.initial_observation = "start";
  rec.steps = {{"a", "one", 0.0, false}, {"b", "two", 0.0, false}, {"c", "three", 0.0, false}};
  ReplayEnv env(rec);
  env.reset(replay_task(2));
  CHECK_FALSE(env.step("a").terminal);
  Observation cut = env.step("b");
  CHECK(cut.terminal);
  CHECK(cut.reward == 0.0);
}

// ---------------------------------------------------------------------------
// Factory

TEST_CASE("environment factory builds generative kinds and refuses replay") {
  CHECK(make_environment(EnvKind::household)->kind() == EnvKind::household);
  CHECK(make_environment(EnvKind::shop)->kind() == EnvKind::shop);
  CHECK(make_environment(EnvKind::corpus_qa)->kind() == EnvKind::corpus_qa);
  CHECK(fixtures::thrown_code([] { make_environment(EnvKind::replay); }) ==
        Errc::unknown_env_kind);
  CHECK(make_replay_env(small_recording())->kind() == EnvKind::replay);
}
