#pragma once

// Scripted stand-in for a chat-completions judge endpoint. Replies are taken
// from a script: entries with `when_contains` are content rules matched
// against the request prompt; the remaining entries are replayed in order,
// repeating the last one once the sequence is exhausted.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#ifdef _res
#undef _res  // see judge_client.hpp
#endif
#include <nlohmann/json.hpp>

#include "pathgrpo/error.hpp"

namespace pathgrpo {

struct MockReply {
  int status = 200;
  std::optional<std::string> content;   // wrapped as choices[0].message.content
  std::optional<std::string> raw_body;  // sent verbatim, overrides content
  int delay_ms = 0;
  std::optional<std::string> when_contains;
};

inline MockReply mock_scores(double integrity, double knowledge) {
  MockReply r;
  r.content = nlohmann::json{{"integrity", integrity}, {"knowledge", knowledge}}.dump();
  return r;
}

inline MockReply mock_status(int status) {
  MockReply r;
  r.status = status;
  r.raw_body = "{\"error\":\"scripted failure\"}";
  return r;
}

inline void from_json(const nlohmann::json& j, MockReply& r) {
  r = MockReply{};
  r.status = j.value("status", 200);
  r.delay_ms = j.value("delay_ms", 0);
  if (auto it = j.find("scores"); it != j.end()) r.content = it->dump();
  if (auto it = j.find("content"); it != j.end()) r.content = it->get<std::string>();
  if (auto it = j.find("body"); it != j.end()) r.raw_body = it->get<std::string>();
  if (auto it = j.find("when_contains"); it != j.end()) r.when_contains = it->get<std::string>();
}

inline std::vector<MockReply> parse_mock_script(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    if (!j.is_array()) throw ConfigError("mock script must be a JSON array");
    return j.get<std::vector<MockReply>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed mock script: ") + e.what());
  }
}

inline std::vector<MockReply> load_mock_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read mock script '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_mock_script(buf.str());
}

struct RecordedRequest {
  std::string body;
  std::string prompt;  // concatenated text parts of the user message
  std::string authorization;
  bool has_image = false;
};

class MockJudgeServer {
 public:
  /// Binds to `port` on `host` (port 0 picks a free port) and starts serving.
  /// Throws Error when the port cannot be bound.
  MockJudgeServer(std::vector<MockReply> script, int port, std::string host = "127.0.0.1")
      : host_(std::move(host)) {
    for (auto& r : script) {
      (r.when_contains ? rules_ : sequence_).push_back(std::move(r));
    }
    server_.new_task_queue = [] { return new httplib::ThreadPool(16); };
    // httplib's default sets SO_REUSEPORT, which would let a second server
    // silently share an occupied port
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    server_.Post("/v1/chat/completions",
                 [this](const httplib::Request& req, httplib::Response& res) { handle(req, res); });
    if (port == 0) {
      port_ = server_.bind_to_any_port(host_);
      if (port_ < 0) throw Error("mock judge: cannot bind any port on " + host_);
    } else {
      if (!server_.bind_to_port(host_, port)) {
        throw Error("mock judge: port " + std::to_string(port) + " on " + host_ +
                    " is busy or unavailable");
      }
      port_ = port;
    }
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockJudgeServer() { stop(); }

  MockJudgeServer(const MockJudgeServer&) = delete;
  MockJudgeServer& operator=(const MockJudgeServer&) = delete;

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  void wait() {
    if (thread_.joinable()) thread_.join();
  }

  int port() const noexcept { return port_; }

  std::string url() const {
    return "http://" + host_ + ":" + std::to_string(port_) + "/v1/chat/completions";
  }

  std::vector<RecordedRequest> requests() const {
    std::lock_guard lock(mu_);
    return log_;
  }

  std::size_t request_count() const {
    std::lock_guard lock(mu_);
    return log_.size();
  }

  /// Highest number of requests observed in flight at the same time.
  int peak_concurrency() const noexcept { return peak_.load(); }

  void reset_log() {
    std::lock_guard lock(mu_);
    log_.clear();
    next_ = 0;
    peak_ = 0;
  }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    const int now = ++in_flight_;
    for (int seen = peak_.load(); now > seen && !peak_.compare_exchange_weak(seen, now);) {
    }

    RecordedRequest rec;
    rec.body = req.body;
    if (req.has_header("Authorization")) rec.authorization = req.get_header_value("Authorization");
    auto j = nlohmann::json::parse(req.body, nullptr, false);
    if (!j.is_discarded() && j.contains("messages")) {
      for (const auto& m : j["messages"]) {
        if (!m.contains("content")) continue;
        const auto& c = m["content"];
        if (c.is_string()) rec.prompt += c.get<std::string>();
        if (!c.is_array()) continue;
        for (const auto& part : c) {
          if (part.value("type", "") == "text") rec.prompt += part.value("text", "");
          if (part.value("type", "") == "image_url") rec.has_image = true;
        }
      }
    } else {
      rec.prompt = req.body;
    }

    std::optional<MockReply> reply;
    {
      std::lock_guard lock(mu_);
      for (const auto& rule : rules_) {
        if (rec.prompt.find(*rule.when_contains) != std::string::npos) {
          reply = rule;
          break;
        }
      }
      if (!reply && !sequence_.empty()) {
        reply = sequence_[std::min(next_, sequence_.size() - 1)];
        ++next_;
      }
      log_.push_back(std::move(rec));
    }

    if (!reply) {
      res.status = 500;
      res.set_content("{\"error\":\"no script entry matched\"}", "application/json");
    } else {
      if (reply->delay_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(reply->delay_ms));
      }
      res.status = reply->status;
      if (reply->raw_body) {
        res.set_content(*reply->raw_body, "application/json");
      } else {
        nlohmann::json body = {
            {"choices", nlohmann::json::array(
                            {{{"message", {{"role", "assistant"},
                                           {"content", reply->content.value_or("")}}}}})}};
        res.set_content(body.dump(), "application/json");
      }
    }
    --in_flight_;
  }

  std::string host_;
  int port_ = 0;
  httplib::Server server_;
  std::thread thread_;
  std::vector<MockReply> rules_;
  std::vector<MockReply> sequence_;
  mutable std::mutex mu_;
  std::vector<RecordedRequest> log_;
  std::size_t next_ = 0;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
};

inline std::unique_ptr<MockJudgeServer> run_mock_judge(std::vector<MockReply> script, int port) {
  return std::make_unique<MockJudgeServer>(std::move(script), port);
}

}  // namespace pathgrpo
