#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "esd/service/chat_service.hpp"
#include "esd/service/http_server.hpp"
#include "support.hpp"

// Last: <resolv.h>, pulled in by httplib, defines a macro named _res that
// collides with identifiers inside Eigen.
#include <httplib.h>

using namespace esd;
using namespace esd::service;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::shared_ptr<const model::Model> shared_model() {
  static const auto m = [] {
    auto cfg = esd::testing::tiny_config(
        corpus::Vocabulary({"i", "am", "a", "plumber", "nurse", "feel", "sad", "you", "ok", ".", "that", "sounds",
                            "hard", "tired", "work", "as"}),
        21);
    cfg.max_len = 128;
    return std::make_shared<const model::Model>(cfg);
  }();
  return m;
}

ServiceOptions counting_ids(std::shared_ptr<std::atomic<int>> counter) {
  ServiceOptions o;
  o.decode.max_new_tokens = 6;
  o.checkpoint_name = "tiny.ckpt";
  o.id_generator = [counter] { return "s" + std::to_string(counter->fetch_add(1)); };
  o.clock = [] { return std::int64_t{1'700'000'000'000}; };
  return o;
}

ChatService make_service(std::shared_ptr<SessionStore> store = std::make_shared<MemorySessionStore>(),
                         ServiceOptions o = counting_ids(std::make_shared<std::atomic<int>>(0))) {
  return ChatService(shared_model(), std::move(store), std::move(o));
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("esd_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class SpyExtractor final : public persona::Extractor {
 public:
  mutable std::vector<std::vector<std::string>> calls;
  persona::PersonaSet extract(const std::vector<std::string>& seeker) const override {
    calls.push_back(seeker);
    return persona::rule_extract(seeker);
  }
  std::string name() const override { return "spy"; }
};

}  // namespace

TEST(Session, CreateGivesDistinctEmptySessions) {
  ChatService svc = make_service();
  const Session a = svc.create_session();
  const Session b = svc.create_session();
  EXPECT_NE(a.id, b.id);
  EXPECT_TRUE(a.persona.empty());
  EXPECT_TRUE(a.dialogue.empty());
  EXPECT_TRUE(svc.store().contains(a.id));
  EXPECT_EQ(svc.get_session(a.id), a);
  EXPECT_THROW(svc.get_session("nope"), NotFound);
  EXPECT_THROW(svc.chat_turn("nope", "hello"), NotFound);
  EXPECT_THROW(svc.chat_turn(a.id, "   "), InvalidArgument);
}

TEST(Session, DefaultIdsAreRandomHex) {
  ServiceOptions o;
  ChatService svc(shared_model(), std::make_shared<MemorySessionStore>(), o);
  const auto id = svc.create_session().id;
  EXPECT_EQ(id.size(), 32u);
  EXPECT_TRUE(valid_session_id(id));
  EXPECT_NE(id, svc.create_session().id);
  EXPECT_FALSE(valid_session_id("../etc"));
  EXPECT_FALSE(valid_session_id(""));
}

TEST(ChatTurn, ThirdUtteranceRuleAndExtraction) {
  ChatService svc = make_service();
  const auto id = svc.create_session().id;
  const TurnResponse first = svc.chat_turn(id, "i am a nurse and i feel tired");
  EXPECT_TRUE(first.persona.empty());
  EXPECT_EQ(first.turn, 1u);
  const TurnResponse second = svc.chat_turn(id, "i am a plumber and i feel sad");
  const persona::PersonaSet expected = persona::rule_extract({"i am a nurse and i feel tired", "i am a plumber and i feel sad"});
  EXPECT_EQ(second.persona.sentences, expected.sentences);
  const persona::PersonaSet from_message = persona::rule_extract({"i am a plumber and i feel sad"});
  ASSERT_EQ(from_message.size(), 2u);
  for (const auto& s : from_message.sentences) {
    EXPECT_NE(std::find(second.persona.sentences.begin(), second.persona.sentences.end(), s),
              second.persona.sentences.end())
        << s;
  }
  const Session s = svc.get_session(id);
  ASSERT_EQ(s.dialogue.size(), 4u);
  EXPECT_EQ(s.dialogue[0].speaker, corpus::Speaker::Seeker);
  EXPECT_EQ(s.dialogue[1].speaker, corpus::Speaker::Supporter);
  EXPECT_EQ(s.dialogue[3].text, second.response);
  EXPECT_EQ(s.persona, second.persona);
}

TEST(ChatTurn, PersonaEqualsExtractorOverSeekerTurnsAndIsMonotone) {
  ChatService svc = make_service();
  const auto id = svc.create_session().id;
  const std::vector<std::string> msgs = {"hello", "i work as a nurse", "i feel tired", "i have a dog", "ok"};
  persona::PersonaSet prev;
  for (const auto& m : msgs) {
    const TurnResponse r = svc.chat_turn(id, m);
    for (const auto& sentence : prev.sentences) {
      EXPECT_NE(std::find(r.persona.sentences.begin(), r.persona.sentences.end(), sentence), r.persona.sentences.end());
    }
    prev = r.persona;
  }
  const Session s = svc.get_session(id);
  corpus::Conversation conv;
  conv.turns = s.dialogue;
  const persona::RuleExtractor ex;
  const auto annotated = persona::annotate_conversation(conv, ex);
  EXPECT_EQ(s.persona, annotated.persona_before(s.dialogue.size()));
}

TEST(ChatTurn, SupporterTextNeverReachesExtractor) {
  auto spy = std::make_shared<SpyExtractor>();
  ServiceOptions o = counting_ids(std::make_shared<std::atomic<int>>(0));
  o.extractor = spy;
  o.responder = [](const model::Model&, std::span<const corpus::Utterance>, const persona::PersonaSet&,
                   const decode::DecodeConfig&, std::optional<corpus::Strategy>) {
    decode::GenerationResult g;
    g.strategy = corpus::Strategy::Question;
    g.text = "SUPPORTER_SECRET";
    g.strategy_ranking = {{corpus::Strategy::Question, 1.0}};
    return g;
  };
  ChatService svc(shared_model(), std::make_shared<MemorySessionStore>(), o);
  const auto id = svc.create_session().id;
  for (const char* m : {"one", "i am a nurse", "three", "four"}) svc.chat_turn(id, m);
  ASSERT_FALSE(spy->calls.empty());
  for (const auto& call : spy->calls) {
    for (const auto& u : call) EXPECT_EQ(u.find("SUPPORTER_SECRET"), std::string::npos);
  }
}

TEST(ChatTurn, AlphaOverrideAndForcedStrategy) {
  ChatService svc = make_service();
  SessionOverrides zero;
  zero.alpha_override = 0.0;
  const auto id = svc.create_session(zero).id;
  for (const char* m : {"hi", "i am a nurse", "i feel sad"}) EXPECT_EQ(svc.chat_turn(id, m).alpha_used, 0.0);
  const auto other = svc.create_session().id;
  const TurnResponse r = svc.chat_turn(other, "hi", 3, corpus::Strategy::ProvidingSuggestions);
  EXPECT_TRUE(r.forced);
  EXPECT_EQ(r.strategy, corpus::Strategy::ProvidingSuggestions);
  EXPECT_DOUBLE_EQ(r.alpha_used, 0.75);
  EXPECT_EQ(r.seed, 3u);
  EXPECT_EQ(r.top_strategies.size(), 3u);
}

TEST(ChatTurn, SameStateSameSeedSameResponse) {
  ChatService a = make_service();
  ChatService b = make_service();
  const auto ia = a.create_session().id;
  const auto ib = b.create_session().id;
  ASSERT_EQ(ia, ib);
  for (const char* m : {"hi", "i am a nurse", "i feel sad"}) {
    const TurnResponse ra = a.chat_turn(ia, m);
    const TurnResponse rb = b.chat_turn(ib, m);
    EXPECT_EQ(ra, rb);
    EXPECT_EQ(ra.seed, default_turn_seed(ia, ra.turn));
  }
  EXPECT_EQ(to_json(a.get_session(ia)).dump(), to_json(b.get_session(ib)).dump());
  const auto fresh = a.create_session().id;
  EXPECT_EQ(a.chat_turn(fresh, "hi", 77).response, a.chat_turn(a.create_session().id, "hi", 77).response);
}

TEST(ChatTurn, FailedTurnLeavesStoredSessionByteIdentical) {
  TempDir dir;
  auto store = std::make_shared<FileSessionStore>(dir.path());
  auto fail = std::make_shared<std::atomic<bool>>(false);
  ServiceOptions o = counting_ids(std::make_shared<std::atomic<int>>(0));
  o.responder = [fail](const model::Model& m, std::span<const corpus::Utterance> d, const persona::PersonaSet& p,
                       const decode::DecodeConfig& c, std::optional<corpus::Strategy> f) {
    if (*fail) throw std::runtime_error("generation failed");
    return decode::generate(m, d, p, c, f);
  };
  ChatService svc(shared_model(), store, o);
  const auto id = svc.create_session().id;
  svc.chat_turn(id, "hi");
  svc.chat_turn(id, "i am a nurse");
  const std::string before = slurp(store->path_of(id));
  *fail = true;
  EXPECT_THROW(svc.chat_turn(id, "i feel sad"), std::runtime_error);
  EXPECT_EQ(slurp(store->path_of(id)), before);
  EXPECT_EQ(svc.get_session(id).dialogue.size(), 4u);
  *fail = false;
  svc.chat_turn(id, "i feel sad");
  EXPECT_EQ(svc.get_session(id).dialogue.size(), 6u);
}

TEST(Store, FileStoreReloadsSessions) {
  TempDir dir;
  std::string id;
  Session saved;
  {
    ChatService svc = make_service(std::make_shared<FileSessionStore>(dir.path()));
    SessionOverrides o;
    o.top_k = 5;
    id = svc.create_session(o).id;
    svc.chat_turn(id, "hi");
    svc.chat_turn(id, "i am a plumber");
    saved = svc.get_session(id);
  }
  FileSessionStore reopened(dir.path());
  ASSERT_TRUE(reopened.contains(id));
  EXPECT_EQ(reopened.get(id).value(), saved);
  EXPECT_EQ(reopened.ids(), std::vector<std::string>{id});
  EXPECT_EQ(session_from_json(to_json(saved)), saved);
  for (const auto& entry : fs::directory_iterator(dir.path())) EXPECT_EQ(entry.path().extension(), ".json");
}

TEST(Store, OverridesJsonRejectsUnknownKeys) {
  EXPECT_THROW(overrides_from_json(json{{"alpha", 1}}), ParseError);
  const auto o = overrides_from_json(json{{"alpha_override", 0.5}, {"top_p", 0.8}});
  EXPECT_EQ(o.alpha_override, 0.5);
  const decode::DecodeConfig c = o.apply(decode::DecodeConfig{});
  EXPECT_EQ(c.top_p, 0.8);
  EXPECT_EQ(c.top_k, 10);
  EXPECT_EQ(overrides_from_json(to_json(o)), o);
}

TEST(Concurrency, ParallelSessionsMatchSerialRuns) {
  constexpr int kSessions = 16;
  constexpr int kTurns = 10;
  auto messages = [](int s, int t) {
    static const char* pool[] = {"hi", "i am a nurse", "i feel sad", "i have a dog", "ok", "i work as a plumber"};
    return std::string(pool[(s + t) % 6]);
  };
  ChatService parallel = make_service();
  std::vector<std::string> ids;
  for (int s = 0; s < kSessions; ++s) ids.push_back(parallel.create_session().id);
  std::vector<std::thread> threads;
  for (int s = 0; s < kSessions; ++s) {
    threads.emplace_back([&, s] {
      for (int t = 0; t < kTurns; ++t) parallel.chat_turn(ids[static_cast<std::size_t>(s)], messages(s, t));
    });
  }
  for (auto& th : threads) th.join();

  ChatService serial = make_service();
  for (int s = 0; s < kSessions; ++s) {
    const auto id = serial.create_session().id;
    ASSERT_EQ(id, ids[static_cast<std::size_t>(s)]);
    for (int t = 0; t < kTurns; ++t) serial.chat_turn(id, messages(s, t));
    EXPECT_EQ(serial.get_session(id), parallel.get_session(id));
    EXPECT_EQ(parallel.get_session(id).dialogue.size(), static_cast<std::size_t>(2 * kTurns));
  }
}

TEST(Concurrency, SameSessionTurnsAreSerialised) {
  ChatService svc = make_service();
  const auto id = svc.create_session().id;
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&] { svc.chat_turn(id, "i feel sad"); });
  for (auto& th : threads) th.join();
  const Session s = svc.get_session(id);
  ASSERT_EQ(s.dialogue.size(), 16u);
  for (std::size_t i = 0; i < s.dialogue.size(); ++i) {
    EXPECT_EQ(s.dialogue[i].speaker, i % 2 == 0 ? corpus::Speaker::Seeker : corpus::Speaker::Supporter);
  }
}

TEST(Routing, ContractWithoutTransport) {
  ChatService svc = make_service();
  auto r = handle_request(svc, "GET", "/healthz", "");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(json::parse(r.body), (json{{"status", "ok"}, {"checkpoint", "tiny.ckpt"}}));

  r = handle_request(svc, "POST", "/sessions", R"({"alpha_override": 0})");
  ASSERT_EQ(r.status, 201);
  const auto session = json::parse(r.body);
  const std::string id = session["id"];
  EXPECT_TRUE(session["dialogue"].empty());

  r = handle_request(svc, "POST", "/sessions/" + id + "/turns", R"({"message": "hi", "seed": 5})");
  ASSERT_EQ(r.status, 200);
  const auto turn = json::parse(r.body);
  for (const char* k : {"session_id", "turn", "response", "strategy", "alpha_used", "persona", "strategy_ranking"}) {
    EXPECT_TRUE(turn.contains(k)) << k;
  }
  EXPECT_EQ(turn["alpha_used"], 0.0);
  EXPECT_EQ(turn["seed"], 5);
  EXPECT_EQ(turn["strategy_ranking"].size(), 3u);

  r = handle_request(svc, "GET", "/sessions/" + id, "");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(json::parse(r.body)["dialogue"].size(), 2u);

  auto error_of = [&](const std::string& m, const std::string& p, const std::string& b) {
    const auto e = handle_request(svc, m, p, b);
    const auto j = json::parse(e.body);
    EXPECT_TRUE(j.contains("detail"));
    return std::make_pair(e.status, j["error"].get<std::string>());
  };
  EXPECT_EQ(error_of("GET", "/sessions/missing", ""), std::make_pair(404, std::string("not_found")));
  EXPECT_EQ(error_of("POST", "/sessions/missing/turns", R"({"message":"x"})").first, 404);
  EXPECT_EQ(error_of("POST", "/sessions/" + id + "/turns", "{bad json").first, 400);
  EXPECT_EQ(error_of("POST", "/sessions/" + id + "/turns", R"({"seed": 1})").first, 400);
  EXPECT_EQ(error_of("POST", "/sessions/" + id + "/turns", R"({"message":"x","extra":1})").first, 400);
  EXPECT_EQ(error_of("POST", "/sessions/" + id + "/turns", R"({"message":"x","seed":-1})").first, 400);
  EXPECT_EQ(error_of("POST", "/sessions/" + id + "/turns", R"({"message":"x","forced_strategy":"Nope"})").first, 400);
  EXPECT_EQ(error_of("POST", "/sessions", R"({"unknown": 1})").first, 400);
  EXPECT_EQ(error_of("DELETE", "/sessions/" + id, "").first, 405);
  EXPECT_EQ(error_of("GET", "/nowhere", "").first, 404);
  EXPECT_EQ(json::parse(handle_request(svc, "GET", "/sessions/" + id, "").body)["dialogue"].size(), 2u);
}

TEST(Http, EndToEndOverLoopback) {
  ChatService svc = make_service();
  HttpServer server(svc);
  const int port = server.start("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(30, 0);

  auto res = cli.Get("/healthz");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
  EXPECT_EQ(json::parse(res->body)["status"], "ok");

  res = cli.Post("/sessions", "", "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201);
  const std::string id = json::parse(res->body)["id"];

  for (const char* m : {"hi", "i am a plumber and i feel sad"}) {
    res = cli.Post(("/sessions/" + id + "/turns").c_str(), json{{"message", m}, {"seed", nullptr}}.dump(),
                   "application/json");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;
  }
  const auto last = json::parse(res->body);
  EXPECT_EQ(last["persona"]["sentences"].size(), 2u);

  res = cli.Get(("/sessions/" + id).c_str());
  ASSERT_TRUE(res);
  const auto session = json::parse(res->body);
  EXPECT_EQ(session["dialogue"].size(), 4u);
  EXPECT_EQ(session["persona"], last["persona"]);

  res = cli.Get("/sessions/unknown");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(json::parse(res->body)["error"], "not_found");

  res = cli.Options("/sessions");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  server.stop();
}
