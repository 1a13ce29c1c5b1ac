#include "p2c/service.h"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cctype>
#include <cstdio>
#include <istream>
#include <ostream>

#include "httplib.h"
#include "p2c/errors.h"
#include "p2c/utf8.h"

namespace p2c {

TokenSeq commit_tokens(const std::string& text) {
  const bool spaced = std::any_of(text.begin(), text.end(), [](char c) {
    return std::isspace(static_cast<unsigned char>(c));
  });
  return tokenize_utterance(
      text, spaced ? Granularity::kWord : Granularity::kCharacter);
}

SessionManager::SessionManager(std::shared_ptr<const P2CModel> model,
                               Lexicon lexicon, ServiceOptions options,
                               ServiceClock clock)
    : model_(std::move(model)),
      lexicon_(std::move(lexicon)),
      options_(options),
      clock_(clock ? std::move(clock)
                   : ServiceClock([] { return std::chrono::steady_clock::now(); })),
      id_rng_(std::random_device{}()) {
  if (!model_) throw ConfigError("session manager needs a model");
  if (options_.ttl.count() <= 0) throw ConfigError("session ttl must be positive");
  if (options_.k < 1 || options_.beam < options_.k) {
    throw ConfigError("service needs beam >= k >= 1");
  }
}

Session SessionManager::open() {
  const auto now = clock_();
  std::lock_guard lock(table_mutex_);
  char buf[40];
  std::snprintf(buf, sizeof(buf), "s%llu-%016llx",
                static_cast<unsigned long long>(next_id_++),
                static_cast<unsigned long long>(id_rng_()));
  auto slot = std::make_shared<Slot>();
  slot->session.id = buf;
  slot->session.created = now;
  slot->session.last_active = now;
  sessions_.emplace(slot->session.id, slot);
  return slot->session;
}

std::shared_ptr<SessionManager::Slot> SessionManager::find(const std::string& id) {
  const auto now = clock_();
  std::lock_guard lock(table_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("no session '" + id + "'");
  auto slot = it->second;
  std::lock_guard session_lock(slot->mutex);
  if (now - slot->session.last_active > options_.ttl) {
    sessions_.erase(it);
    throw NotFoundError("session '" + id + "' expired");
  }
  slot->session.last_active = now;
  return slot;
}

void SessionManager::close(const std::string& id) {
  find(id);
  std::lock_guard lock(table_mutex_);
  sessions_.erase(id);
}

PinyinSequence SessionManager::segment_request(const std::string& raw) const {
  return segment_typed(raw, lexicon_);
}

ConvertResult SessionManager::convert(const std::string& id,
                                      const std::string& raw_pinyin,
                                      std::size_t beam, std::size_t k) {
  auto slot = find(id);
  ConvertResult result;
  result.pinyin = segment_request(raw_pinyin);
  {
    std::lock_guard lock(slot->mutex);
    result.context = slot->session.context;
  }
  result.candidates =
      beam_search(*model_, result.pinyin, result.context, BeamOptions{beam, k, 0});
  for (const Candidate& c : result.candidates.items) {
    result.texts.push_back(candidate_text(*model_, c));
  }
  return result;
}

Session SessionManager::commit(const std::string& id, const std::string& text,
                               const std::string& pinyin) {
  auto slot = find(id);
  TokenSeq tokens = commit_tokens(text);
  if (tokens.empty()) throw DomainError("empty commit");
  std::lock_guard lock(slot->mutex);
  slot->session.context = std::move(tokens);
  slot->session.history.push_back({pinyin, text});
  return slot->session;
}

AttentionTrace SessionManager::attention_trace(const std::string& id,
                                               const std::string& raw_pinyin) {
  if (model_->config().variant != Variant::kGated) {
    throw UnsupportedError(std::string("attention trace needs the gated model, "
                                       "loaded model is ") +
                           variant_name(model_->config().variant));
  }
  auto slot = find(id);
  AttentionTrace trace;
  trace.pinyin = segment_request(raw_pinyin).tokens;
  {
    std::lock_guard lock(slot->mutex);
    trace.context = slot->session.context;
  }
  if (trace.context.empty()) {
    throw DomainError("attention trace needs a committed context");
  }
  const auto pinyin_ids = model_->vocabs().pinyin.encode(trace.pinyin);
  const auto context_ids = model_->vocabs().target.encode(trace.context);
  Graph g(GradMode::kNoGrad);
  const EncodedSource enc =
      model_->encode(g, SourceIds{pinyin_ids, context_ids}, RunMode::kEval);
  trace.weights = enc.gate_weights.at(0);
  return trace;
}

Session SessionManager::dump(const std::string& id) {
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  return slot->session;
}

std::size_t SessionManager::expire() {
  const auto now = clock_();
  std::lock_guard lock(table_mutex_);
  std::size_t dropped = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    bool stale;
    {
      std::lock_guard session_lock(it->second->mutex);
      stale = now - it->second->session.last_active > options_.ttl;
    }
    if (stale) {
      it = sessions_.erase(it);
      ++dropped;
    } else {
      ++it;
    }
  }
  return dropped;
}

std::size_t SessionManager::size() const {
  std::lock_guard lock(table_mutex_);
  return sessions_.size();
}

// ---------------------------------------------------------------------------
// JSON protocol

namespace {

using nlohmann::json;

std::string string_field(const json& request, const char* name) {
  if (!request.contains(name) || !request[name].is_string()) {
    throw RequestError(std::string("missing string field '") + name + "'");
  }
  return request[name].get<std::string>();
}

std::size_t count_field(const json& request, const char* name,
                        std::size_t fallback) {
  if (!request.contains(name)) return fallback;
  const json& v = request[name];
  if (!v.is_number_integer() || v.get<long long>() < 1) {
    throw RequestError(std::string("field '") + name +
                       "' must be a positive integer");
  }
  return v.get<std::size_t>();
}

json history_json(const Session& s) {
  json history = json::array();
  for (const auto& h : s.history) {
    history.push_back({{"pinyin", h.pinyin}, {"text", h.text}});
  }
  return history;
}

json dispatch(SessionManager& sessions, const json& request) {
  if (!request.is_object()) throw RequestError("request must be an object");
  const std::string op = string_field(request, "op");
  if (op == "open") {
    const Session s = sessions.open();
    return {{"ok", true},
            {"session", s.id},
            {"variant", variant_name(sessions.model().config().variant)}};
  }
  if (op == "close") {
    sessions.close(string_field(request, "session"));
    return {{"ok", true}};
  }
  if (op == "convert") {
    const std::string id = string_field(request, "session");
    const std::size_t k = count_field(request, "k", sessions.options().k);
    const std::size_t beam =
        count_field(request, "beam", std::max(sessions.options().beam, k));
    const ConvertResult r =
        sessions.convert(id, string_field(request, "pinyin"), beam, k);
    json candidates = json::array();
    for (std::size_t i = 0; i < r.candidates.items.size(); ++i) {
      const Candidate& c = r.candidates.items[i];
      candidates.push_back({{"rank", i + 1},
                            {"text", r.texts[i]},
                            {"tokens", candidate_tokens(sessions.model(), c)},
                            {"logprob", c.log_prob},
                            {"finished", c.finished}});
    }
    return {{"ok", true},
            {"session", id},
            {"pinyin", r.pinyin.tokens},
            {"form", pinyin_form_name(r.pinyin.form)},
            {"context", join(r.context, "")},
            {"context_tokens", r.context},
            {"truncated", r.candidates.truncated},
            {"candidates", std::move(candidates)}};
  }
  if (op == "commit") {
    const std::string pinyin =
        request.contains("pinyin") ? string_field(request, "pinyin") : "";
    const Session s = sessions.commit(string_field(request, "session"),
                                      string_field(request, "text"), pinyin);
    return {{"ok", true},
            {"session", s.id},
            {"context", join(s.context, "")},
            {"context_tokens", s.context},
            {"history", history_json(s)}};
  }
  if (op == "attention") {
    const AttentionTrace t = sessions.attention_trace(
        string_field(request, "session"), string_field(request, "pinyin"));
    return {{"ok", true},
            {"pinyin", t.pinyin},
            {"context", t.context},
            {"weights", t.weights}};
  }
  if (op == "history") {
    const Session s = sessions.dump(string_field(request, "session"));
    return {{"ok", true},
            {"session", s.id},
            {"context", join(s.context, "")},
            {"context_tokens", s.context},
            {"history", history_json(s)}};
  }
  throw UnsupportedError("unknown op '" + op + "'");
}

std::string dump_line(const json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace

nlohmann::json handle_request(SessionManager& sessions,
                              const nlohmann::json& request) {
  try {
    return dispatch(sessions, request);
  } catch (const UnsegmentableError& e) {
    return {{"ok", false},
            {"error", e.code()},
            {"message", e.what()},
            {"offset", e.offset()}};
  } catch (const Error& e) {
    return {{"ok", false}, {"error", e.code()}, {"message", e.what()}};
  } catch (const json::exception& e) {
    return {{"ok", false}, {"error", "bad_request"}, {"message", e.what()}};
  } catch (const std::exception& e) {
    return {{"ok", false}, {"error", "internal"}, {"message", e.what()}};
  }
}

std::string handle_line(SessionManager& sessions, const std::string& line) {
  json request;
  try {
    request = json::parse(line);
  } catch (const json::parse_error& e) {
    return dump_line(
        {{"ok", false}, {"error", "bad_request"}, {"message", e.what()}});
  }
  return dump_line(handle_request(sessions, request));
}

// ---------------------------------------------------------------------------
// TCP

LineServer::LineServer(SessionManager& sessions, std::uint16_t port)
    : sessions_(sessions) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error("io", "socket() failed");
  const int on = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &on, sizeof(on));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(listen_fd_, 16) != 0) {
    ::close(listen_fd_);
    throw Error("io", "cannot listen on port " + std::to_string(port));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

LineServer::~LineServer() { stop(); }

void LineServer::start() {
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void LineServer::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (!running_) break;
      continue;
    }
    std::lock_guard lock(clients_mutex_);
    client_fds_.push_back(fd);
    clients_.emplace_back([this, fd] { serve_client(fd); });
  }
}

void LineServer::serve_client(int fd) {
  struct Release {
    LineServer* server;
    int fd;
    ~Release() {
      std::lock_guard lock(server->clients_mutex_);
      std::erase(server->client_fds_, fd);
      ::close(fd);
    }
  } release{this, fd};
  std::string buffer;
  char chunk[4096];
  while (true) {
    const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t newline;
    while ((newline = buffer.find('\n')) != std::string::npos) {
      std::string line = buffer.substr(0, newline);
      buffer.erase(0, newline + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const std::string reply = handle_line(sessions_, line) + "\n";
      std::size_t sent = 0;
      while (sent < reply.size()) {
        const ssize_t w =
            ::send(fd, reply.data() + sent, reply.size() - sent, MSG_NOSIGNAL);
        if (w <= 0) return;
        sent += static_cast<std::size_t>(w);
      }
    }
  }
}

void LineServer::stop() {
  if (listen_fd_ < 0) return;
  running_ = false;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  listen_fd_ = -1;
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> clients;
  {
    std::lock_guard lock(clients_mutex_);
    for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
    clients.swap(clients_);
  }
  for (auto& t : clients) t.join();
}

void LineServer::wait() {
  if (acceptor_.joinable()) acceptor_.join();
}

// ---------------------------------------------------------------------------
// HTTP

struct HttpServer::Impl {
  httplib::Server server;
  std::thread thread;
};

HttpServer::HttpServer(SessionManager& sessions,
                       std::optional<std::filesystem::path> ui_dir)
    : impl_(std::make_unique<Impl>()) {
  impl_->server.Post("/api", [&sessions](const httplib::Request& req,
                                         httplib::Response& res) {
    res.set_content(handle_line(sessions, req.body), "application/json");
  });
  if (ui_dir) {
    if (!impl_->server.set_mount_point("/", ui_dir->string())) {
      throw NotFoundError("ui directory not found: " + ui_dir->string());
    }
  }
}

HttpServer::~HttpServer() { stop(); }

std::uint16_t HttpServer::start(std::uint16_t port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port("127.0.0.1");
  } else if (!impl_->server.bind_to_port("127.0.0.1", port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("io", "cannot bind HTTP port " + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return static_cast<std::uint16_t>(bound);
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

// ---------------------------------------------------------------------------
// REPL

namespace {

bool all_letters(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == ' ' || c == '\'';
  });
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

void repl(SessionManager& sessions, std::istream& in, std::ostream& out) {
  const std::string id = sessions.open().id;
  std::vector<std::string> last;
  std::string last_pinyin;
  std::string line;
  char buf[64];
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    try {
      if (line == ":quit") break;
      if (line.front() == '{') {
        out << handle_line(sessions, line) << '\n';
      } else if (line == ":history") {
        for (const auto& h : sessions.dump(id).history) {
          out << h.pinyin << '\t' << h.text << '\n';
        }
      } else if (line.rfind(":commit ", 0) == 0) {
        const std::string text = trim(line.substr(8));
        sessions.commit(id, text, last_pinyin);
        out << "committed\t" << text << '\n';
        last.clear();
      } else if (line.rfind(":attn ", 0) == 0) {
        const AttentionTrace t = sessions.attention_trace(id, line.substr(6));
        out << join(t.context, "\t") << '\n';
        for (std::size_t i = 0; i < t.pinyin.size(); ++i) {
          out << t.pinyin[i];
          for (double w : t.weights[i]) {
            std::snprintf(buf, sizeof(buf), "\t%.4f", w);
            out << buf;
          }
          out << '\n';
        }
      } else if (line.size() == 1 && std::isdigit(static_cast<unsigned char>(line[0]))) {
        const std::size_t rank = static_cast<std::size_t>(line[0] - '0');
        if (rank < 1 || rank > last.size()) {
          out << "error\tdomain\tno candidate " << rank << '\n';
          continue;
        }
        sessions.commit(id, last[rank - 1], last_pinyin);
        out << "committed\t" << last[rank - 1] << '\n';
        last.clear();
      } else if (all_letters(line)) {
        const ConvertResult r = sessions.convert(id, line, sessions.options().beam,
                                                 sessions.options().k);
        last = r.texts;
        last_pinyin = line;
        for (std::size_t i = 0; i < r.texts.size(); ++i) {
          std::snprintf(buf, sizeof(buf), "%zu\t%.6f\t", i + 1,
                        r.candidates.items[i].log_prob);
          out << buf << r.texts[i] << '\n';
        }
      } else {
        out << "error\tbad_request\tunrecognized input\n";
      }
    } catch (const Error& e) {
      out << "error\t" << e.code() << '\t' << e.what() << '\n';
    }
    out.flush();
  }
  try {
    sessions.close(id);
  } catch (const NotFoundError&) {
  }
}

}  // namespace p2c
