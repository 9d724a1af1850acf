#include <doctest.h>

#include <cmath>

#include "narrator/store.hpp"
#include "support.hpp"

using namespace narrator;
using namespace narrator::store;
using json = nlohmann::json;

namespace {

const std::string kIntro = "Intro scene with Schlick.\n\n1. One\n2. Two\n3. Three\n4. Four";

/// Writes a session through the sink interface the engine uses.
struct Planter {
  ProtocolStore& store;
  Clock clock = stepping_clock(testing::epoch(), std::chrono::milliseconds{10});
  int n = 0;

  std::string plant(const std::string& model, bool intro, int responses, Validity requested, bool rejected_intro = false) {
    char id[16];
    std::snprintf(id, sizeof id, "p%03d", ++n);
    SessionMeta meta{id, model, "schlick-1936-en", 4, clock()};
    auto add = [&](EventRole role, std::string text, int turn, bool rejected = false) {
      store.append_event(meta, ProtocolEvent{role, std::move(text), turn, clock(), rejected});
    };
    add(EventRole::system, "sheet", 0);
    if (intro) add(EventRole::narrator, kIntro, 0, rejected_intro);
    for (int i = 1; i <= responses; ++i) {
      add(EventRole::player, std::to_string(1 + i % 4), i);
      add(EventRole::narrator, "Turn " + std::to_string(i) + "\n\n1. a\n2. b\n3. c\n4. d", i);
    }
    store.close_session(id, requested, std::nullopt);
    return id;
  }
};

}  // namespace

TEST_CASE("classification rules") {
  using V = Validity;
  std::vector<ProtocolEvent> sys{{EventRole::system, "s"}};
  std::vector<ProtocolEvent> intro{{EventRole::system, "s"}, {EventRole::narrator, "i"}};
  std::vector<ProtocolEvent> rejected{{EventRole::system, "s"}, {EventRole::narrator, "i", 0, {}, true}};
  std::vector<ProtocolEvent> played = intro;
  played.push_back({EventRole::player, "1", 1});
  CHECK(classify(V::valid, intro) == V::intro_only);
  CHECK(classify(V::valid, sys) == V::invalid_technical);
  CHECK(classify(V::invalid_technical, intro) == V::intro_only);
  CHECK(classify(V::valid, rejected) == V::invalid_technical);
  CHECK(classify(V::invalid_refusal, rejected) == V::invalid_refusal);
  CHECK(classify(V::valid, played) == V::valid);
  CHECK(classify(V::invalid_technical, played) == V::invalid_technical);
  CHECK(classify(V::intro_only, played) == V::valid);
  // Engine messages are not player responses.
  std::vector<ProtocolEvent> ended = intro;
  ended.push_back({EventRole::engine, "5"});
  CHECK(count_user_responses(ended) == 0);
}

TEST_CASE("finalize then load round-trips field for field") {
  testing::TempDir dir;
  ProtocolStore store(dir.path(), stepping_clock(testing::epoch() + std::chrono::hours{1}));
  SessionMeta meta{"abc", "mock", "schlick-1936-en", 4, testing::epoch()};
  std::vector<ProtocolEvent> events{
      {EventRole::system, "rules\nline two", 0, testing::epoch()},
      {EventRole::narrator, "Caf\xC3\xA9 \"quoted\"\n\n1. a\n2. b\n3. c\n4. d", 0, testing::epoch() + std::chrono::milliseconds{5}},
      {EventRole::narrator, "bad", 0, testing::epoch() + std::chrono::milliseconds{6}, true},
      {EventRole::player, "3", 1, testing::epoch() + std::chrono::milliseconds{7}}};
  for (const auto& e : events) store.append_event(meta, e);
  const ProtocolRecord rec = store.finalize("abc", Validity::invalid_technical, "provider-failure: HTTP 503");
  CHECK(rec.user_response_count == 1);
  CHECK(rec.validity == Validity::invalid_technical);

  const auto corpus = store.load_corpus();
  REQUIRE(corpus.size() == 1);
  CHECK(corpus[0] == rec);
  CHECK(corpus[0].events == events);
  CHECK(store.load("abc") == rec);
  CHECK_FALSE(store.load("missing"));

  // A second store over the same directory sees the same thing.
  ProtocolStore again(dir.path());
  CHECK(again.load_corpus() == corpus);
}

TEST_CASE("appends after finalize are rejected") {
  testing::TempDir dir;
  ProtocolStore store(dir.path());
  SessionMeta meta{"s1", "mock", "sheet", 4, testing::epoch()};
  store.append_event(meta, {EventRole::system, "x", 0, testing::epoch()});
  store.finalize("s1", Validity::valid);
  CHECK_THROWS_AS(store.append_event(meta, {EventRole::player, "1", 1, testing::epoch()}), StateError);
  CHECK_THROWS_AS(store.finalize("s1", Validity::valid), StateError);
  ProtocolStore reopened(dir.path());
  CHECK_THROWS_AS(reopened.append_event(meta, {EventRole::player, "1", 1, testing::epoch()}), StateError);
  CHECK_THROWS_AS(store.finalize("nope", Validity::valid), NotFoundError);
}

TEST_CASE("event timestamps may not go backwards") {
  testing::TempDir dir;
  ProtocolStore store(dir.path());
  SessionMeta meta{"s1", "mock", "sheet", 4, testing::epoch()};
  store.append_event(meta, {EventRole::system, "x", 0, testing::epoch() + std::chrono::seconds{1}});
  CHECK_THROWS_AS(store.append_event(meta, {EventRole::narrator, "y", 0, testing::epoch()}), ValidationError);
}

TEST_CASE("session ids cannot escape the store") {
  testing::TempDir dir;
  ProtocolStore store(dir.path());
  SessionMeta meta{"../evil", "mock", "sheet", 4, testing::epoch()};
  CHECK_THROWS_AS(store.append_event(meta, {EventRole::system, "x", 0, testing::epoch()}), ValidationError);
}

TEST_CASE("corrupt and unfinalized sessions are tallied, not fatal") {
  testing::TempDir dir;
  ProtocolStore store(dir.path());
  Planter p{store};
  p.plant("mock", true, 2, Validity::valid);
  const std::string broken = p.plant("mock", true, 1, Validity::valid);
  SessionMeta open{"open1", "mock", "sheet", 4, testing::epoch()};
  store.append_event(open, {EventRole::system, "x", 0, testing::epoch()});

  std::ofstream(dir.path() / "sessions" / (broken + ".jsonl"), std::ios::app) << "{not json\n";
  LoadReport report;
  const auto corpus = store.load_corpus({}, &report);
  CHECK(corpus.size() == 1);
  CHECK(report.corrupt == 1);
  CHECK(report.unfinalized == 1);
  CHECK(report.warnings.size() == 1);
}

TEST_CASE("planted 20-protocol corpus: exact accounting") {
  testing::TempDir dir;
  ProtocolStore store(dir.path());
  Planter p{store};
  const std::map<std::string, std::vector<int>> valid{{"model-a", {10, 10, 3, 7}}, {"model-b", {10, 1, 5}}, {"model-c", {4, 10, 2}}};
  for (const auto& [m, counts] : valid)
    for (int c : counts) p.plant(m, true, c, Validity::valid);
  // Technical failures: mid-game (2 and 6 responses) and on the very first call.
  p.plant("model-a", true, 2, Validity::invalid_technical);
  p.plant("model-b", true, 6, Validity::invalid_technical);
  p.plant("model-c", false, 0, Validity::invalid_technical);
  // Refusals.
  p.plant("model-a", true, 0, Validity::invalid_refusal, true);
  p.plant("model-c", true, 0, Validity::invalid_refusal, true);
  // Intro only: reset or failure after the intro.
  p.plant("model-a", true, 0, Validity::valid);
  p.plant("model-a", true, 0, Validity::invalid_technical);
  p.plant("model-b", true, 0, Validity::valid);
  p.plant("model-b", true, 0, Validity::valid);
  p.plant("model-c", true, 0, Validity::invalid_technical);

  const auto corpus = store.load_corpus();
  REQUIRE(corpus.size() == 20);
  const auto s = summarize(corpus, 5, {"model-a", "model-b", "model-c"});
  CHECK(s.total == 20);
  CHECK(s.per_validity.at(Validity::valid) == 10);
  CHECK(s.per_validity.at(Validity::invalid_technical) == 3);
  CHECK(s.per_validity.at(Validity::invalid_refusal) == 2);
  CHECK(s.per_validity.at(Validity::intro_only) == 5);

  // Valid counts 10,10,3,7,10,1,5,4,10,2: sum 62, squared deviations sum 119.6.
  CHECK(s.interaction_n == 10);
  CHECK(std::abs(*s.interaction_mean - 6.2) <= 1e-9);
  CHECK(std::abs(*s.interaction_sd - std::sqrt(119.6 / 9.0)) <= 1e-9);
  CHECK(*s.interaction_max == 10);

  REQUIRE(s.per_model.size() == 3);
  CHECK(s.per_model[0].model_label == "model-a");
  CHECK(s.per_model[0].all == 8);
  CHECK(s.per_model[0].at_threshold == 3);
  CHECK(s.per_model[1].all == 6);
  CHECK(s.per_model[1].at_threshold == 3);
  CHECK(s.per_model[2].all == 6);
  CHECK(s.per_model[2].at_threshold == 1);

  CorpusFilter f;
  f.validity = Validity::valid;
  f.min_responses = 5;
  f.model_labels = {"model-a"};
  CHECK(store.load_corpus(f).size() == 3);
}

TEST_CASE("summary of two protocols with 5 and 10 responses") {
  std::vector<ProtocolRecord> recs(2);
  recs[0].user_response_count = 5;
  recs[1].user_response_count = 10;
  const auto s = summarize(recs);
  CHECK(*s.interaction_mean == doctest::Approx(7.5));
  CHECK(*s.interaction_sd == doctest::Approx(3.5355).epsilon(1e-4));
  const auto empty = summarize(std::vector<ProtocolRecord>{});
  CHECK_FALSE(empty.interaction_mean);
  CHECK(empty.total == 0);
}

TEST_CASE("corpus order is (started_at, session_id) regardless of write order") {
  testing::TempDir dir;
  ProtocolStore store(dir.path());
  const auto t0 = testing::epoch();
  for (const std::string id : {"c", "a", "b"}) {
    const auto start = id == "c" ? t0 : t0 + std::chrono::seconds{1};
    SessionMeta meta{id, "m", "sheet", 4, start};
    store.append_event(meta, {EventRole::system, "x", 0, start});
    store.append_event(meta, {EventRole::narrator, kIntro, 0, start});
    store.finalize(id, Validity::valid);
  }
  const auto corpus = store.load_corpus();
  CHECK(corpus[0].session_id() == "c");
  CHECK(corpus[1].session_id() == "a");
  CHECK(corpus[2].session_id() == "b");
}

TEST_CASE("intro extraction") {
  testing::TempDir dir;
  ProtocolStore store(dir.path());
  Planter p{store};
  p.plant("model-b", true, 3, Validity::valid);
  p.plant("model-a", true, 0, Validity::valid);
  p.plant("model-a", true, 0, Validity::invalid_refusal, true);
  p.plant("model-a", false, 0, Validity::invalid_technical);
  p.plant("unknown", true, 1, Validity::valid);
  const auto corpus = store.load_corpus();
  std::vector<std::string> warnings;
  const auto intros = extract_intros(corpus, {"model-a", "model-b"}, {}, &warnings);
  REQUIRE(intros.size() == 2);
  CHECK(intros[0].model_label == "model-a");
  CHECK(intros[1].model_label == "model-b");
  CHECK(intros[0].text == "Intro scene with Schlick.");
  CHECK(warnings.size() == 2);  // no accepted reply; unknown model
  const auto full = extract_intros(corpus, {"model-a", "model-b"}, {.include_options = true});
  CHECK(full[0].text == kIntro);
}

TEST_CASE("extracted intros never contain option lines") {
  std::vector<ProtocolRecord> recs(1);
  recs[0].meta.model_label = "m";
  recs[0].events = {{EventRole::narrator, "A.\n1. x\nB.\n\n2) y\n3: z\n4. w\n"}};
  const auto intros = extract_intros(recs, {"m"});
  REQUIRE(intros.size() == 1);
  CHECK(intros[0].text == "A.\nB.");
}

TEST_CASE("critiques are stored alongside the protocol") {
  testing::TempDir dir;
  ProtocolStore store(dir.path());
  Planter p{store};
  const std::string id = p.plant("mock", true, 1, Validity::valid);
  CritiqueRecord c{"critic", "Evaluate.", "Accurate except X", false, testing::epoch()};
  store.save_critique(id, c);
  CHECK(store.critiques(id) == std::vector<CritiqueRecord>{c});
  CHECK_THROWS_AS(store.save_critique("missing", c), NotFoundError);
  CHECK(store.critiques("missing").empty());
}

TEST_CASE("exports") {
  testing::TempDir dir;
  ProtocolStore store(dir.path() / "store");
  Planter p{store};
  p.plant("m", true, 1, Validity::valid);
  p.plant("m", true, 0, Validity::valid);
  const auto corpus = store.load_corpus();
  export_corpus_json(corpus, dir / "out" / "corpus.json");
  const json doc = json::parse(testing::read_file(dir / "out" / "corpus.json"));
  CHECK(doc["schema"] == "narrator.corpus/1");
  CHECK(doc["records"].size() == 2);
  CHECK(doc["records"][1]["validity"] == "intro_only");
  export_intro_texts(extract_intros(corpus, {"m"}), dir / "out" / "intros");
  CHECK(testing::read_file(dir / "out" / "intros" / "m" / "001_p001.txt") == "Intro scene with Schlick.\n");
  CHECK(std::filesystem::exists(dir / "out" / "intros" / "m" / "002_p002.txt"));
}
