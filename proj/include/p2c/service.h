#ifndef P2C_SERVICE_H_
#define P2C_SERVICE_H_

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "p2c/corpus.h"
#include "p2c/decode.h"
#include "p2c/model.h"
#include "p2c/pinyin.h"

namespace p2c {

using ServiceClock = std::function<std::chrono::steady_clock::time_point()>;

struct HistoryEntry {
  std::string pinyin;  // as sent with the commit, possibly empty
  std::string text;
};

struct Session {
  std::string id;
  TokenSeq context;  // tokens of the last commit
  std::vector<HistoryEntry> history;
  std::chrono::steady_clock::time_point created;
  std::chrono::steady_clock::time_point last_active;
};

struct ConvertResult {
  PinyinSequence pinyin;
  TokenSeq context;
  CandidateList candidates;
  std::vector<std::string> texts;  // parallel to candidates.items
};

struct AttentionTrace {
  TokenSeq pinyin;
  TokenSeq context;
  // weights[i][j]: first-hop weight of pinyin token i on context token j.
  std::vector<std::vector<double>> weights;
};

struct ServiceOptions {
  std::chrono::seconds ttl{1800};
  std::size_t beam = 10;
  std::size_t k = 10;
};

// Commit text is split on whitespace when it has any, else per character.
TokenSeq commit_tokens(const std::string& text);

// Sessions over one frozen model. Requests on different sessions run in
// parallel; requests on one session are serialized. Idle sessions expire
// after `ttl` and are then reported as not found.
class SessionManager {
 public:
  SessionManager(std::shared_ptr<const P2CModel> model, Lexicon lexicon,
                 ServiceOptions options = {}, ServiceClock clock = {});

  const P2CModel& model() const { return *model_; }
  const ServiceOptions& options() const { return options_; }

  Session open();
  void close(const std::string& id);
  ConvertResult convert(const std::string& id, const std::string& raw_pinyin,
                        std::size_t beam, std::size_t k);
  Session commit(const std::string& id, const std::string& text,
                 const std::string& pinyin = "");
  AttentionTrace attention_trace(const std::string& id,
                                 const std::string& raw_pinyin);
  // Snapshot of the session, history included.
  Session dump(const std::string& id);

  // Drops expired sessions; returns how many.
  std::size_t expire();
  std::size_t size() const;

 private:
  struct Slot {
    std::mutex mutex;
    Session session;
  };

  std::shared_ptr<Slot> find(const std::string& id);
  PinyinSequence segment_request(const std::string& raw) const;

  std::shared_ptr<const P2CModel> model_;
  Lexicon lexicon_;
  ServiceOptions options_;
  ServiceClock clock_;

  mutable std::mutex table_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::mt19937_64 id_rng_;
  std::uint64_t next_id_ = 1;
};

// Handles one protocol request. Never throws: failures become
// {"ok":false,"error":CODE,"message":...}.
nlohmann::json handle_request(SessionManager& sessions,
                              const nlohmann::json& request);
// Parses one line of JSON and serializes the response on one line.
std::string handle_line(SessionManager& sessions, const std::string& line);

// Line-delimited JSON over TCP on 127.0.0.1, one thread per connection.
class LineServer {
 public:
  // Port 0 picks a free port.
  LineServer(SessionManager& sessions, std::uint16_t port);
  ~LineServer();
  LineServer(const LineServer&) = delete;
  LineServer& operator=(const LineServer&) = delete;

  std::uint16_t port() const { return port_; }
  void start();
  void stop();
  // Blocks until stop() from another thread.
  void wait();

 private:
  void accept_loop();
  void serve_client(int fd);

  SessionManager& sessions_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex clients_mutex_;
  std::vector<std::thread> clients_;
  std::vector<int> client_fds_;
};

// The same protocol as POST /api, plus static files from `ui_dir`.
class HttpServer {
 public:
  HttpServer(SessionManager& sessions,
             std::optional<std::filesystem::path> ui_dir);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds 127.0.0.1 (port 0 picks a free one) and serves in a thread.
  std::uint16_t start(std::uint16_t port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Terminal loop over one session. Letters convert, a digit commits that
// rank, `:commit TEXT`, `:attn PINYIN`, `:history`, `:quit`. A line that
// starts with `{` is passed to the JSON protocol unchanged.
void repl(SessionManager& sessions, std::istream& in, std::ostream& out);

}  // namespace p2c

#endif  // P2C_SERVICE_H_
