#include "cntf/service.hpp"
#include "support/overfit.hpp"
#include "support/replay.hpp"

#include <gtest/gtest.h>

#include <regex>
#include <thread>

namespace cntf {
namespace {

using nlohmann::json;

std::shared_ptr<const CntfModel> tiny_model() {
  static std::shared_ptr<const CntfModel> model = [] {
    ModelConfig c;
    c.embed_dim = 8;
    c.hidden_dim = 8;
    c.encoder_heads = 2;
    c.ffn_dim = 16;
    const Vocabulary vocab(tokenize("the city sits on a wide river . lion lives in savanna tell me about what is there ?"));
    std::map<std::string, TripleStore> stores;
    stores["x"] = TripleStore({{"city", "RelatedTo", "river"}, {"lion", "AtLocation", "savanna"}});
    return std::make_shared<const CntfModel>(c, vocab, build_entity_vocab(stores), 9);
  }();
  return model;
}

ServiceOptions options() {
  ServiceOptions o;
  o.seed = 42;
  o.max_len = 8;
  return o;
}

json session_body() {
  return {{"knowledge", {"the city sits on a wide river .", "the lion lives in the savanna ."}},
          {"triples_inline", "city\tRelatedTo\triver\n"}};
}

std::string open_session(ChatEngine& engine, json body = session_body()) {
  const ServiceReply r = engine.create_session(body);
  EXPECT_EQ(r.status, 201) << r.body.dump();
  return r.body.value("session_id", "");
}

TEST(Session, CreatedWithVersionFourUuid) {
  ChatEngine engine(tiny_model(), options());
  const std::string id = open_session(engine);
  EXPECT_TRUE(std::regex_match(id, std::regex("[0-9a-f]{8}-[0-9a-f]{4}-4[0-9a-f]{3}-[89ab][0-9a-f]{3}-[0-9a-f]{12}")))
      << id;
  EXPECT_NE(open_session(engine), id);
}

TEST(Session, RejectsBadBodies) {
  ChatEngine engine(tiny_model(), options());
  EXPECT_EQ(engine.create_session({{"knowledge", json::array()}}).status, 400);
  EXPECT_EQ(engine.create_session({{"knowledge", {"  "}}}).status, 400);
  const ServiceReply bad_tsv = engine.create_session({{"knowledge", {"x"}}, {"triples_inline", "a\tb\tc\nbroken\n"}});
  EXPECT_EQ(bad_tsv.status, 400);
  EXPECT_NE(bad_tsv.body["error"].get<std::string>().find("line 2"), std::string::npos);
  EXPECT_EQ(engine.create_session({{"knowledge", {"x"}}, {"config", {{"hops", 3}}}}).status, 400);
  EXPECT_EQ(engine.create_session({{"knowledge", {"x"}}, {"config", {{"window", 0}}}}).status, 400);
  EXPECT_EQ(engine.create_session(json::array()).status, 400);
  // Inline triples alone are enough.
  EXPECT_EQ(engine.create_session({{"triples_inline", "city\tRelatedTo\triver\n"}}).status, 201);
}

TEST(Session, NoModelAnswers503) {
  ChatEngine engine(nullptr, options());
  EXPECT_FALSE(engine.has_model());
  EXPECT_EQ(engine.create_session(session_body()).status, 503);
  EXPECT_EQ(engine.chat("anything", {{"utterance", "hi"}}).status, 503);
}

TEST(Chat, ErrorContract) {
  ChatEngine engine(tiny_model(), options());
  const std::string id = open_session(engine);
  EXPECT_EQ(engine.chat("missing", {{"utterance", "hello"}}).status, 404);
  EXPECT_EQ(engine.chat(id, {{"utterance", "  "}}).status, 400);
  EXPECT_EQ(engine.chat(id, json::object()).status, 400);
  EXPECT_EQ(engine.trace("missing-1").status, 404);
}

TEST(Chat, FirstTurnBankHoldsOnlyTheUtterance) {
  ChatEngine engine(tiny_model(), options());
  const std::string id = open_session(engine);
  ASSERT_EQ(engine.chat(id, {{"utterance", "Tell me about the city ."}}).status, 200);
  EXPECT_EQ(engine.bank(id)->tokens, tokenize("tell me about the city ."));
  EXPECT_FALSE(engine.bank("missing"));
}

TEST(Chat, TraceCoversEveryTokenAndIsArchived) {
  ChatEngine engine(tiny_model(), options());
  const std::string id = open_session(engine);
  const ServiceReply r = engine.chat(id, {{"utterance", "what about the river ?"}});
  ASSERT_EQ(r.status, 200);
  const json& trace = r.body["trace"];
  const Tokens words = tokenize(r.body["response"].get<std::string>());
  ASSERT_FALSE(trace.empty());
  const bool finished = trace.back()["token"] == "<eos>";
  EXPECT_EQ(trace.size(), words.size() + (finished ? 1 : 0));
  for (const json& rec : trace) {
    const TraceRecord t = trace_record_from_json(rec);
    EXPECT_EQ(to_json(t), rec);
    double d = 0, k = 0, tr = 0;
    for (double a : t.alpha_d) d += a;
    for (double a : t.alpha_kb) k += a;
    for (const auto& w : t.alpha_t) tr += w.weight;
    EXPECT_NEAR(d, 1.0, 1e-9);
    EXPECT_NEAR(k, 1.0, 1e-9);
    EXPECT_NEAR(tr, 1.0, 1e-9);
    EXPECT_EQ(t.alpha_d.size(), tokenize("what about the river ?").size());
    EXPECT_TRUE(t.source == "vocab" || t.source == "dialogue" || t.source == "knowledge" || t.source == "triple");
  }
  const ServiceReply archived = engine.trace(r.body["trace_id"]);
  EXPECT_EQ(archived.status, 200);
  EXPECT_EQ(archived.body, trace);
}

TEST(Chat, WindowOfOneAttendsOnlyToTheSecondInput) {
  ChatEngine engine(tiny_model(), options());
  json body = session_body();
  body["config"] = {{"window", 1}};
  const std::string id = open_session(engine, body);
  const ServiceReply first = engine.chat(id, {{"utterance", "tell me about the city ."}});
  ASSERT_EQ(first.status, 200);
  const ServiceReply second = engine.chat(id, {{"utterance", "is there a lion ?"}});
  ASSERT_EQ(second.status, 200);
  const std::size_t expected =
      tokenize(first.body["response"].get<std::string>()).size() + tokenize("is there a lion ?").size();
  for (const json& rec : second.body["trace"]) EXPECT_EQ(rec["alpha_d"].size(), expected);
  EXPECT_EQ(engine.bank(id)->positions(), static_cast<int>(expected));
}

TEST(Chat, SessionsAreIsolatedAndModelIsUntouched) {
  const std::uint64_t before = testing::parameter_fingerprint(tiny_model()->params());
  const std::vector<std::string> a_turns = {"tell me about the city .", "what about the river ?"};
  const std::vector<std::string> b_turns = {"is there a lion ?", "what lives in the savanna ?"};

  auto serial = [&](const std::vector<std::string>& turns) {
    ChatEngine engine(tiny_model(), options());
    const std::string id = open_session(engine);
    std::vector<std::string> replies;
    for (const auto& u : turns) replies.push_back(engine.chat(id, {{"utterance", u}}).body["response"]);
    return replies;
  };
  const auto a_alone = serial(a_turns);
  const auto b_alone = serial(b_turns);

  ChatEngine engine(tiny_model(), options());
  const std::string a = open_session(engine);
  const std::string b = open_session(engine);
  std::vector<std::string> a_mixed, b_mixed;
  for (std::size_t i = 0; i < 2; ++i) {
    b_mixed.push_back(engine.chat(b, {{"utterance", b_turns[i]}}).body["response"]);
    a_mixed.push_back(engine.chat(a, {{"utterance", a_turns[i]}}).body["response"]);
  }
  EXPECT_EQ(a_mixed, a_alone);
  EXPECT_EQ(b_mixed, b_alone);

  std::vector<std::string> a_threaded, b_threaded;
  ChatEngine threaded(tiny_model(), options());
  const std::string ta = open_session(threaded);
  const std::string tb = open_session(threaded);
  std::thread t1([&] {
    for (const auto& u : a_turns) a_threaded.push_back(threaded.chat(ta, {{"utterance", u}}).body["response"]);
  });
  std::thread t2([&] {
    for (const auto& u : b_turns) b_threaded.push_back(threaded.chat(tb, {{"utterance", u}}).body["response"]);
  });
  t1.join();
  t2.join();
  EXPECT_EQ(a_threaded, a_alone);
  EXPECT_EQ(b_threaded, b_alone);
  EXPECT_EQ(testing::parameter_fingerprint(tiny_model()->params()), before);
}

TEST(Http, ReplayOnFreshServersIsByteIdentical) {
  const testing::Transcript first = testing::run_replay_script(tiny_model(), options());
  const testing::Transcript second = testing::run_replay_script(tiny_model(), options());
  EXPECT_EQ(first, second);
  ASSERT_EQ(first.size(), 11u);
  auto status_of = [](const std::string& line) { return line.substr(line.find("-> ") + 3, 3); };
  EXPECT_EQ(status_of(first[0]), "201");
  for (std::size_t i = 1; i <= 6; ++i) EXPECT_EQ(status_of(first[i]), "200") << first[i];
  EXPECT_EQ(status_of(first[7]), "400");
  EXPECT_EQ(status_of(first[8]), "400");
  EXPECT_EQ(status_of(first[9]), "404");
  EXPECT_EQ(status_of(first[10]), "404");
}

TEST(Uuid, SeedDetermined) {
  std::mt19937_64 a(5), b(5);
  EXPECT_EQ(uuid_v4(a), uuid_v4(b));
}

}  // namespace
}  // namespace cntf
