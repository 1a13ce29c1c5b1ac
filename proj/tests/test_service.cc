#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "p2c/errors.h"
#include "p2c/service.h"
#include "p2c/synthetic.h"
#include "p2c/tolerances.h"
#include "p2c/training.h"

using namespace p2c;
using nlohmann::json;

namespace {

Lexicon lexicon() { return Lexicon::load(std::string(P2C_DATA_DIR) + "/lexicon.tsv"); }

std::shared_ptr<P2CModel> make_model(Variant variant, std::uint64_t seed = 1) {
  ModelConfig c = ModelConfig::desk_scale(variant);
  c.pinyin_embed = 6;
  c.target_embed = 6;
  c.gru_hidden = 4;
  c.lstm_cells = 8;
  const auto corpus = overfit_corpus(200, 1);
  auto m = std::make_shared<P2CModel>(P2CModel::build(c, build_vocab(corpus, 1), seed));
  // A few epochs so that candidates end on EOS.
  TrainConfig t;
  t.epochs = 3;
  t.halve_after_epoch = 3;
  t.batch_size = 8;
  t.dropout = 0;
  train(*m, corpus, t);
  return m;
}

// The context BiGRU forgets its state (update gate shut, no recurrence), so
// a repeated context token gives identical rows and equal attention.
std::shared_ptr<P2CModel> memoryless_context_model() {
  auto m = make_model(Variant::kGated);
  for (const char* dir : {"fwd", "bwd"}) {
    const std::string prefix = std::string("gru.context.") + dir;
    const std::size_t g = m->config().gru_hidden;
    auto b = m->params().get(prefix + ".b").mutable_values();
    for (std::size_t i = g; i < 2 * g; ++i) b[i] = -1000;
    for (double& u : m->params().get(prefix + ".u_cand").mutable_values()) u = 0;
  }
  return m;
}

struct Fixture {
  explicit Fixture(std::shared_ptr<const P2CModel> model = make_model(Variant::kGated),
                   ServiceOptions options = {})
      : sessions(std::move(model), lexicon(), options,
                 [this] { return now; }) {}

  std::chrono::steady_clock::time_point now{};
  SessionManager sessions;
};

void same_lists(const ConvertResult& a, const ConvertResult& b) {
  REQUIRE(a.candidates.items.size() == b.candidates.items.size());
  for (std::size_t i = 0; i < a.candidates.items.size(); ++i) {
    CHECK(a.candidates.items[i].ids == b.candidates.items[i].ids);
    CHECK(a.candidates.items[i].log_prob == b.candidates.items[i].log_prob);
  }
}

class TcpClient {
 public:
  explicit TcpClient(std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    REQUIRE(::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
  }
  ~TcpClient() { ::close(fd_); }

  json call(const std::string& line) {
    const std::string out = line + "\n";
    REQUIRE(::send(fd_, out.data(), out.size(), 0) == static_cast<ssize_t>(out.size()));
    std::string reply;
    char c;
    while (::recv(fd_, &c, 1, 0) == 1 && c != '\n') reply += c;
    return json::parse(reply);
  }

 private:
  int fd_ = -1;
};

}  // namespace

TEST_CASE("commit text tokenization") {
  CHECK(commit_tokens("今天天气") == TokenSeq{"今", "天", "天", "气"});
  CHECK(commit_tokens("今天 天气") == TokenSeq{"今天", "天气"});
  CHECK(commit_tokens("").empty());
}

TEST_CASE("a fresh session converts with an empty context") {
  Fixture f;
  const Session s = f.sessions.open();
  CHECK(s.context.empty());
  CHECK(s.history.empty());
  const ConvertResult r = f.sessions.convert(s.id, "jintian", 8, 5);
  CHECK(r.context.empty());
  CHECK(r.pinyin.tokens == TokenSeq{"jin", "tian"});
  const CandidateList direct =
      beam_search(f.sessions.model(), r.pinyin, TokenSeq{}, BeamOptions{8, 5, 0});
  REQUIRE(direct.items.size() == r.candidates.items.size());
  for (std::size_t i = 0; i < direct.items.size(); ++i)
    CHECK(direct.items[i].ids == r.candidates.items[i].ids);
  CHECK(r.texts.size() == r.candidates.items.size());
}

TEST_CASE("convert is pure") {
  Fixture f;
  const std::string id = f.sessions.open().id;
  f.sessions.commit(id, "今天");
  const ConvertResult a = f.sessions.convert(id, "tq", 6, 6);
  const ConvertResult b = f.sessions.convert(id, "tq", 6, 6);
  same_lists(a, b);
  CHECK(a.pinyin.form == PinyinForm::kAbbreviated);
  const Session s = f.sessions.dump(id);
  CHECK(s.context == TokenSeq{"今", "天"});
  CHECK(s.history.size() == 1);
}

TEST_CASE("commits set a one-utterance context") {
  Fixture f;
  const std::string id = f.sessions.open().id;
  f.sessions.commit(id, "今天天气", "jintiantianqi");
  CHECK(f.sessions.convert(id, "hen", 4, 4).context == TokenSeq{"今", "天", "天", "气"});
  f.sessions.commit(id, "很好");
  const Session s = f.sessions.dump(id);
  CHECK(s.context == TokenSeq{"很", "好"});
  REQUIRE(s.history.size() == 2);
  CHECK(s.history[0].pinyin == "jintiantianqi");
  CHECK(s.history[0].text == "今天天气");
  CHECK(s.history[1].text == "很好");
  // Text outside any candidate list, even outside the vocabulary.
  CHECK(f.sessions.commit(id, "龘").context == TokenSeq{"龘"});
  CHECK_THROWS_AS(f.sessions.commit(id, ""), DomainError);
}

TEST_CASE("the context changes the candidates") {
  Fixture f(memoryless_context_model());
  const std::string id = f.sessions.open().id;
  const ConvertResult bare = f.sessions.convert(id, "tianqi", 4, 4);
  f.sessions.commit(id, "今天");
  const ConvertResult with = f.sessions.convert(id, "tianqi", 4, 4);
  CHECK(bare.candidates.items[0].log_prob != with.candidates.items[0].log_prob);
}

TEST_CASE("unknown, closed and expired sessions") {
  ServiceOptions options;
  options.ttl = std::chrono::seconds(60);
  Fixture f(make_model(Variant::kGated), options);
  CHECK_THROWS_AS(f.sessions.convert("nope", "tian", 4, 4), NotFoundError);
  CHECK_THROWS_AS(f.sessions.commit("nope", "天"), NotFoundError);
  CHECK_THROWS_AS(f.sessions.dump("nope"), NotFoundError);
  CHECK_THROWS_AS(f.sessions.close("nope"), NotFoundError);

  const std::string a = f.sessions.open().id;
  const std::string b = f.sessions.open().id;
  CHECK(a != b);
  f.sessions.close(a);
  CHECK_THROWS_AS(f.sessions.close(a), NotFoundError);

  f.now += std::chrono::seconds(59);
  CHECK_NOTHROW(f.sessions.convert(b, "tian", 4, 4));  // refreshes activity
  f.now += std::chrono::seconds(59);
  CHECK_NOTHROW(f.sessions.dump(b));
  f.now += std::chrono::seconds(61);
  CHECK_THROWS_AS(f.sessions.convert(b, "tian", 4, 4), NotFoundError);
  CHECK(f.sessions.size() == 0);

  const std::string c = f.sessions.open().id;
  f.sessions.open();
  f.now += std::chrono::seconds(30);
  f.sessions.dump(c);
  f.now += std::chrono::seconds(40);
  CHECK(f.sessions.expire() == 1);
  CHECK(f.sessions.size() == 1);
}

TEST_CASE("invalid service options") {
  ServiceOptions bad;
  bad.ttl = std::chrono::seconds(0);
  CHECK_THROWS_AS(SessionManager(make_model(Variant::kBasic), lexicon(), bad), ConfigError);
  ServiceOptions narrow;
  narrow.beam = 2;
  narrow.k = 3;
  CHECK_THROWS_AS(SessionManager(make_model(Variant::kBasic), lexicon(), narrow), ConfigError);
}

TEST_CASE("sessions do not see each other's context") {
  Fixture f;
  const std::string a = f.sessions.open().id;
  const std::string b = f.sessions.open().id;
  f.sessions.commit(a, "今天");
  CHECK(f.sessions.convert(b, "tian", 4, 4).context.empty());
  f.sessions.commit(b, "天气");
  CHECK(f.sessions.convert(a, "tian", 4, 4).context == TokenSeq{"今", "天"});
  CHECK(f.sessions.convert(b, "tian", 4, 4).context == TokenSeq{"天", "气"});
}

TEST_CASE("concurrent sessions") {
  Fixture f;
  const char* texts[] = {"今天", "天气", "很好", "我们"};
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i) ids.push_back(f.sessions.open().id);
  std::vector<std::thread> workers;
  std::atomic<int> wrong{0};
  for (int i = 0; i < 4; ++i) {
    workers.emplace_back([&, i] {
      for (int round = 0; round < 5; ++round) {
        f.sessions.commit(ids[i], texts[i]);
        const ConvertResult r = f.sessions.convert(ids[i], "tianqi", 4, 4);
        if (r.context != commit_tokens(texts[i])) ++wrong;
      }
    });
  }
  for (auto& w : workers) w.join();
  CHECK(wrong == 0);
  for (int i = 0; i < 4; ++i) CHECK(f.sessions.dump(ids[i]).history.size() == 5);
}

TEST_CASE("replaying history reproduces candidate lists") {
  Fixture f;
  const std::string id = f.sessions.open().id;
  const std::vector<std::pair<std::string, std::string>> steps = {
      {"jintian", "今天"}, {"tianqi", "天气"}, {"hh", "很好"}};
  std::vector<ConvertResult> first;
  for (const auto& [py, text] : steps) {
    first.push_back(f.sessions.convert(id, py, 6, 5));
    f.sessions.commit(id, text, py);
  }
  const Session log = f.sessions.dump(id);
  const std::string again = f.sessions.open().id;
  for (std::size_t i = 0; i < log.history.size(); ++i) {
    same_lists(first[i], f.sessions.convert(again, log.history[i].pinyin, 6, 5));
    f.sessions.commit(again, log.history[i].text, log.history[i].pinyin);
  }
  CHECK(f.sessions.dump(again).context == log.context);
}

TEST_CASE("attention traces") {
  SUBCASE("repeated context token splits attention evenly") {
    Fixture f(memoryless_context_model());
    const std::string id = f.sessions.open().id;
    f.sessions.commit(id, "天天");
    const AttentionTrace t = f.sessions.attention_trace(id, "tianqi");
    CHECK(t.pinyin == TokenSeq{"tian", "qi"});
    CHECK(t.context == TokenSeq{"天", "天"});
    for (const auto& row : t.weights) CHECK(row == std::vector<double>{0.5, 0.5});
  }
  SUBCASE("a single context token takes all the weight") {
    Fixture f;
    const std::string id = f.sessions.open().id;
    f.sessions.commit(id, "天");
    const AttentionTrace t = f.sessions.attention_trace(id, "jintianqi");
    REQUIRE(t.weights.size() == 3);
    for (const auto& row : t.weights) CHECK(row == std::vector<double>{1.0});
  }
  SUBCASE("rows are distributions") {
    Fixture f;
    const std::string id = f.sessions.open().id;
    f.sessions.commit(id, "今天天气很好");
    const AttentionTrace t = f.sessions.attention_trace(id, "women qu xuexiao");
    REQUIRE(t.weights.size() == 5);
    for (const auto& row : t.weights) {
      REQUIRE(row.size() == 6);
      double s = 0;
      for (double w : row) s += w;
      CHECK(std::abs(s - 1.0) < Tolerances::kTraceRowSum);
    }
  }
  SUBCASE("errors") {
    Fixture f;
    const std::string id = f.sessions.open().id;
    CHECK_THROWS_AS(f.sessions.attention_trace(id, "tian"), DomainError);
    Fixture basic(make_model(Variant::kBasic));
    const std::string b = basic.sessions.open().id;
    basic.sessions.commit(b, "天");
    CHECK_THROWS_AS(basic.sessions.attention_trace(b, "tian"), UnsupportedError);
    Fixture simple(make_model(Variant::kSimpleConcat));
    const std::string s = simple.sessions.open().id;
    simple.sessions.commit(s, "天");
    CHECK_THROWS_AS(simple.sessions.attention_trace(s, "tian"), UnsupportedError);
  }
}

TEST_CASE("JSON protocol") {
  Fixture f;
  const json open = handle_request(f.sessions, {{"op", "open"}});
  REQUIRE(open["ok"] == true);
  CHECK(open["variant"] == "gated");
  const std::string id = open["session"];

  json r = handle_request(f.sessions, {{"op", "convert"}, {"session", id}, {"pinyin", "jintian"},
                                       {"beam", 6}, {"k", 3}});
  REQUIRE(r["ok"] == true);
  CHECK(r["pinyin"] == json::array({"jin", "tian"}));
  CHECK(r["form"] == "complete");
  CHECK(r["context"] == "");
  CHECK(r["candidates"].size() <= 3);
  CHECK(r["candidates"][0]["rank"] == 1);
  CHECK(r["candidates"][0].contains("logprob"));

  r = handle_request(f.sessions, {{"op", "commit"}, {"session", id}, {"text", "今天天气"}});
  CHECK(r["ok"] == true);
  CHECK(r["context"] == "今天天气");
  r = handle_request(f.sessions, {{"op", "convert"}, {"session", id}, {"pinyin", "hen hao"}});
  CHECK(r["context"] == "今天天气");
  CHECK(r["context_tokens"].size() == 4);
  CHECK(r["candidates"].size() == 10);

  r = handle_request(f.sessions, {{"op", "attention"}, {"session", id}, {"pinyin", "hh"}});
  CHECK(r["ok"] == true);
  CHECK(r["weights"].size() == 2);
  CHECK(r["weights"][0].size() == 4);

  r = handle_request(f.sessions, {{"op", "history"}, {"session", id}});
  CHECK(r["history"].size() == 1);
  CHECK(r["history"][0]["text"] == "今天天气");

  r = handle_request(f.sessions, {{"op", "convert"}, {"session", id}, {"pinyin", "tian vv"}});
  CHECK(r["ok"] == false);
  CHECK(r["error"] == "unsegmentable");
  CHECK(r["offset"] == 5);

  CHECK(handle_request(f.sessions, {{"op", "close"}, {"session", id}})["ok"] == true);
  r = handle_request(f.sessions, {{"op", "close"}, {"session", id}});
  CHECK(r["error"] == "not_found");
  CHECK(handle_request(f.sessions, {{"op", "fly"}})["error"] == "unsupported");
  CHECK(handle_request(f.sessions, {{"op", "convert"}})["error"] == "bad_request");
  CHECK(handle_request(f.sessions, json::array())["error"] == "bad_request");
  CHECK(handle_request(f.sessions, {{"op", "convert"}, {"session", id}, {"pinyin", "a"},
                                    {"k", 0}})["error"] == "bad_request");
  CHECK(handle_request(f.sessions, {{"op", "convert"}, {"session", id}, {"pinyin", "a"},
                                    {"beam", 2}, {"k", 5}})["ok"] == false);

  const std::string line = handle_line(f.sessions, "{not json");
  CHECK(line.find('\n') == std::string::npos);
  CHECK(json::parse(line)["error"] == "bad_request");
}

TEST_CASE("line protocol over TCP") {
  Fixture f;
  LineServer server(f.sessions, 0);
  server.start();
  REQUIRE(server.port() != 0);
  {
    TcpClient a(server.port());
    TcpClient b(server.port());
    const std::string sa = a.call(R"({"op":"open"})")["session"];
    const std::string sb = b.call(R"({"op":"open"})")["session"];
    CHECK(a.call(json({{"op", "commit"}, {"session", sa}, {"text", "今天"}}).dump())["ok"] == true);
    const json ra = a.call(json({{"op", "convert"}, {"session", sa}, {"pinyin", "tq"}}).dump());
    const json rb = b.call(json({{"op", "convert"}, {"session", sb}, {"pinyin", "tq"}}).dump());
    CHECK(ra["context"] == "今天");
    CHECK(rb["context"] == "");
    CHECK(a.call("garbage")["error"] == "bad_request");
  }
  server.stop();
}

TEST_CASE("HTTP endpoint and static UI") {
  const auto ui = std::filesystem::temp_directory_path() / "p2c_ui_test";
  std::filesystem::remove_all(ui);
  std::filesystem::create_directories(ui);
  std::ofstream(ui / "index.html") << "<html>ime</html>";

  Fixture f;
  HttpServer server(f.sessions, ui);
  const std::uint16_t port = server.start(0);
  httplib::Client client("127.0.0.1", port);

  auto page = client.Get("/index.html");
  REQUIRE(page);
  CHECK(page->status == 200);
  CHECK(page->body == "<html>ime</html>");

  auto post = [&](const json& body) {
    auto res = client.Post("/api", body.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    return json::parse(res->body);
  };
  const std::string id = post({{"op", "open"}})["session"];
  post({{"op", "commit"}, {"session", id}, {"text", "今天"}});
  const json r = post({{"op", "convert"}, {"session", id}, {"pinyin", "tq"}});
  CHECK(r["context"] == "今天");
  CHECK(r["pinyin"] == json::array({"t", "q"}));
  CHECK(post({{"op", "history"}, {"session", id}})["history"][0]["text"] == "今天");
  server.stop();
  std::filesystem::remove_all(ui);

  Fixture g;
  CHECK_THROWS_AS(HttpServer(g.sessions, ui), NotFoundError);
}

TEST_CASE("terminal loop") {
  Fixture f(memoryless_context_model());
  std::istringstream in(
      "jintian\n"
      "1\n"
      ":history\n"
      ":commit 天天\n"
      ":attn tian\n"
      "9\n"
      "tian vv\n"
      "{\"op\":\"open\"}\n"
      "??\n"
      ":quit\n"
      "tian\n");
  std::ostringstream out;
  repl(f.sessions, in, out);
  std::istringstream lines(out.str());
  std::vector<std::string> got;
  for (std::string l; std::getline(lines, l);) got.push_back(l);

  std::size_t i = 0;
  // Ten candidates: rank, log-prob, text.
  for (; i < 10; ++i) CHECK(got.at(i).rfind(std::to_string(i + 1) + "\t-", 0) == 0);
  const std::string first = got[0].substr(got[0].rfind('\t') + 1);
  if (first.empty()) {
    CHECK(got.at(i++).rfind("error\tdomain", 0) == 0);
  } else {
    CHECK(got.at(i++) == "committed\t" + first);
    CHECK(got.at(i++) == "jintian\t" + first);
  }
  CHECK(got.at(i++) == "committed\t天天");
  CHECK(got.at(i++) == "天\t天");
  CHECK(got.at(i++) == "tian\t0.5000\t0.5000");
  CHECK(got.at(i++).rfind("error\tdomain", 0) == 0);
  CHECK(got.at(i++).rfind("error\tunsegmentable", 0) == 0);
  CHECK(json::parse(got.at(i++))["ok"] == true);
  CHECK(got.at(i++).rfind("error\tbad_request", 0) == 0);
  CHECK(i == got.size());
  // The loop's own session is closed; the one opened through JSON remains.
  CHECK(f.sessions.size() == 1);
}
