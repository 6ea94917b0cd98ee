#pragma once

// OpenAI-compatible HTTP judge client with retry, exponential backoff with
// jitter and a cap on in-flight requests.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <string>
#include <string_view>
#include <thread>

#include <httplib.h>
// glibc's <resolv.h>, pulled in by httplib, defines `_res` as a macro, which
// breaks any later header using it as an identifier (Eigen does).
#ifdef _res
#undef _res
#endif
#include <nlohmann/json.hpp>

#include "pathgrpo/error.hpp"
#include "pathgrpo/judge_protocol.hpp"

namespace pathgrpo {

struct JudgeConfig {
  std::string endpoint_url = "http://127.0.0.1:8089/v1/chat/completions";
  std::string model = "gpt-4o";
  int timeout_ms = 30000;
  int max_retries = 3;
  int backoff_base_ms = 500;
  int max_concurrent = 4;
  std::string auth_token_env = "PATHGRPO_JUDGE_TOKEN";
  std::string rubric_version = "v1";
  bool test_mode = false;        // seeds backoff jitter with jitter_seed
  std::uint64_t jitter_seed = 0;

  void validate() const {
    if (max_retries < 0) throw ConfigError("judge.max_retries must be >= 0");
    if (max_concurrent < 1) throw ConfigError("judge.max_concurrent must be >= 1");
    if (timeout_ms <= 0) throw ConfigError("judge.timeout_ms must be > 0");
    if (backoff_base_ms < 0) throw ConfigError("judge.backoff_base_ms must be >= 0");
    rubric_for(rubric_version);
  }
};

inline void to_json(nlohmann::json& j, const JudgeConfig& c) {
  j = {{"endpoint_url", c.endpoint_url},     {"model", c.model},
       {"timeout_ms", c.timeout_ms},         {"max_retries", c.max_retries},
       {"backoff_base_ms", c.backoff_base_ms}, {"max_concurrent", c.max_concurrent},
       {"auth_token_env", c.auth_token_env}, {"rubric_version", c.rubric_version},
       {"test_mode", c.test_mode},           {"jitter_seed", c.jitter_seed}};
}

inline void from_json(const nlohmann::json& j, JudgeConfig& c) {
  c = JudgeConfig{};
  c.endpoint_url = j.value("endpoint_url", c.endpoint_url);
  c.model = j.value("model", c.model);
  c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.backoff_base_ms = j.value("backoff_base_ms", c.backoff_base_ms);
  c.max_concurrent = j.value("max_concurrent", c.max_concurrent);
  c.auth_token_env = j.value("auth_token_env", c.auth_token_env);
  c.rubric_version = j.value("rubric_version", c.rubric_version);
  c.test_mode = j.value("test_mode", c.test_mode);
  c.jitter_seed = j.value("jitter_seed", c.jitter_seed);
  c.validate();
}

struct Endpoint {
  std::string scheme_host_port;  // e.g. http://127.0.0.1:8089
  std::string path;              // e.g. /v1/chat/completions
};

inline Endpoint parse_endpoint(std::string_view url) {
  const std::size_t scheme = url.find("://");
  if (scheme == std::string_view::npos) {
    throw ConfigError("judge endpoint must include a scheme: '" + std::string(url) + "'");
  }
  const std::size_t slash = url.find('/', scheme + 3);
  Endpoint e;
  e.scheme_host_port = std::string(url.substr(0, slash));
  e.path = slash == std::string_view::npos ? "" : std::string(url.substr(slash));
  if (e.path.empty() || e.path == "/") e.path = "/v1/chat/completions";
  return e;
}

/// Backoff before retry number `retry` (1-based): base * 2^(retry-1) scaled by
/// a jitter factor drawn from [0.8, 1.2].
inline std::int64_t backoff_delay_ms(int base_ms, int retry, std::mt19937_64& rng) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0,1)
  const double jitter = 0.8 + 0.4 * u;
  return static_cast<std::int64_t>(std::llround(base_ms * std::ldexp(1.0, retry - 1) * jitter));
}

class JudgeClient : public ProcessJudge {
 public:
  explicit JudgeClient(JudgeConfig cfg)
      : cfg_(std::move(cfg)),
        endpoint_(parse_endpoint(cfg_.endpoint_url)),
        slots_(std::max(cfg_.max_concurrent, 1)),
        rng_(cfg_.test_mode ? cfg_.jitter_seed : std::random_device{}()) {
    cfg_.validate();
    if (const char* tok = std::getenv(cfg_.auth_token_env.c_str())) token_ = tok;
  }

  const JudgeConfig& config() const noexcept { return cfg_; }

  /// Number of HTTP requests issued so far, across all calls.
  std::size_t requests_sent() const noexcept { return requests_.load(); }

  JudgeResult judge(const JudgeRequest& req) override {
    const std::string body =
        build_request_body(cfg_.model, render_prompt(req), req.image_ref).dump();
    const auto start = std::chrono::steady_clock::now();
    JudgeFailure last;
    const int max_attempts = cfg_.max_retries + 1;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
      if (attempt > 1) sleep_before_retry(attempt - 1);
      Attempt a = send_once(body);
      if (a.verdict) {
        a.verdict->attempts = attempt;
        a.verdict->latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                    std::chrono::steady_clock::now() - start)
                                    .count();
        return *a.verdict;
      }
      last = a.failure;
      last.attempts = attempt;
      if (!a.retryable) break;
    }
    return last;
  }

 private:
  struct Attempt {
    std::optional<JudgeVerdict> verdict;
    JudgeFailure failure;
    bool retryable = true;
  };

  class SlotGuard {
   public:
    explicit SlotGuard(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
    ~SlotGuard() { s_.release(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

   private:
    std::counting_semaphore<>& s_;
  };

  void sleep_before_retry(int retry) {
    std::int64_t ms;
    {
      std::lock_guard lock(rng_mu_);
      ms = backoff_delay_ms(cfg_.backoff_base_ms, retry, rng_);
    }
    if (ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
  }

  Attempt send_once(const std::string& body) {
    SlotGuard slot(slots_);
    ++requests_;
    httplib::Client cli(endpoint_.scheme_host_port);
    const auto timeout = std::chrono::milliseconds(cfg_.timeout_ms);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

    const auto t0 = std::chrono::steady_clock::now();
    auto res = cli.Post(endpoint_.path, headers, body, "application/json");
    Attempt a;
    if (!res) {
      const auto err = res.error();
      const auto elapsed = std::chrono::steady_clock::now() - t0;
      if (err == httplib::Error::ConnectionTimeout ||
          (err == httplib::Error::Read && elapsed >= timeout)) {
        a.failure = {JudgeErrorKind::timeout, "no reply within " + std::to_string(cfg_.timeout_ms) + " ms", 0};
      } else if (err == httplib::Error::Connection) {
        a.failure = {JudgeErrorKind::refused, "connection refused by " + endpoint_.scheme_host_port, 0};
      } else {
        a.failure = {JudgeErrorKind::transport, httplib::to_string(err), 0};
      }
      return a;
    }
    if (res->status >= 400 && res->status < 500 && res->status != 408 && res->status != 429) {
      a.failure = {JudgeErrorKind::refused, "HTTP " + std::to_string(res->status), 0};
      a.retryable = false;
      return a;
    }
    if (res->status != 200) {
      a.failure = {JudgeErrorKind::transport, "HTTP " + std::to_string(res->status), 0};
      return a;
    }
    auto reply = nlohmann::json::parse(res->body, nullptr, false);
    const nlohmann::json* content = nullptr;
    if (!reply.is_discarded() && reply.is_object() && reply.contains("choices") &&
        reply["choices"].is_array() && !reply["choices"].empty()) {
      const auto& msg = reply["choices"][0];
      if (msg.contains("message") && msg["message"].contains("content") &&
          msg["message"]["content"].is_string()) {
        content = &msg["message"]["content"];
      }
    }
    if (content == nullptr) {
      a.failure = {JudgeErrorKind::malformed_reply, "reply lacks choices[0].message.content", 0};
      return a;
    }
    auto scores = extract_scores(content->get_ref<const std::string&>());
    if (!scores) {
      a.failure = {JudgeErrorKind::malformed_reply, "no score object in reply content", 0};
      return a;
    }
    if (!in_score_window(scores->integrity) || !in_score_window(scores->knowledge)) {
      a.failure = {JudgeErrorKind::malformed_reply, "scores outside [-0.5, 1.5]", 0};
      return a;
    }
    JudgeVerdict v;
    v.integrity_raw = scores->integrity;
    v.knowledge_raw = scores->knowledge;
    v.integrity = clamp_unit(scores->integrity);
    v.knowledge = clamp_unit(scores->knowledge);
    a.verdict = v;
    return a;
  }

  JudgeConfig cfg_;
  Endpoint endpoint_;
  std::string token_;
  std::counting_semaphore<> slots_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
  std::atomic<std::size_t> requests_{0};
};

}  // namespace pathgrpo
