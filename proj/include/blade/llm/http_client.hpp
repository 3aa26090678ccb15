#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "blade/llm/chat.hpp"

namespace blade::llm {

struct EndpointConfig {
  std::string base_url;
  std::string model_name;
  // Environment variable holding the bearer token; empty means no auth header.
  std::string auth_env_var;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 3;
  int max_concurrency = 4;
  std::optional<double> requests_per_minute;
  std::string path = "/v1/chat/completions";

  void validate() const;
  static EndpointConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct RetryPolicy {
  std::chrono::milliseconds initial_delay{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{8000};
  // Each delay is scaled by a factor drawn from [1, 1 + jitter].
  double jitter = 0.25;
};

// Delay before retry number `retry` (0-based), never below `previous`.
std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int retry, double jitter_draw,
                                        std::chrono::milliseconds previous);

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Thrown by transports for connection-level failures.
struct TransportFailure {
  bool timed_out = false;
  std::string message;
};

class Transport {
 public:
  using Headers = std::vector<std::pair<std::string, std::string>>;
  virtual ~Transport() = default;
  // Throws TransportFailure when no HTTP response was received.
  virtual HttpResponse post(const std::string& path, const Headers& headers, const std::string& body,
                            std::chrono::milliseconds timeout) = 0;
};

// cpp-httplib backed transport for http:// and https:// base URLs.
std::shared_ptr<Transport> make_http_transport(const std::string& base_url);

// Spaces request starts at least 60 / rate seconds apart.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_minute);
  void acquire();

 private:
  std::chrono::steady_clock::duration interval_;
  std::chrono::steady_clock::time_point next_free_;
  std::mutex mutex_;
};

// Bounds the number of in-flight requests.
class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(int limit);
  void acquire();
  void release();

 private:
  int available_;
  std::mutex mutex_;
  std::condition_variable cv_;
};

struct EndpointStats {
  std::size_t requests = 0;
  std::size_t attempts = 0;
  std::size_t retries = 0;
  std::vector<std::chrono::milliseconds> delays;
};

// Shared per-endpoint handle: auth, retries with exponential backoff and
// jitter, in-flight limiting and rate limiting. Retries transport failures,
// timeouts, 429 and 5xx; never retries 401/403 or other 4xx.
class EndpointClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  EndpointClient(EndpointConfig config, std::shared_ptr<Transport> transport, RetryPolicy policy = {},
                 Sleeper sleeper = {}, std::uint64_t jitter_seed = 0);

  // Posts a JSON body and returns the 2xx response body.
  std::string post_json(const nlohmann::json& body);

  const EndpointConfig& config() const { return config_; }
  EndpointStats stats() const;

 private:
  Transport::Headers auth_headers() const;

  EndpointConfig config_;
  std::shared_ptr<Transport> transport_;
  RetryPolicy policy_;
  Sleeper sleeper_;
  ConcurrencyLimiter in_flight_;
  std::optional<RateLimiter> rate_;
  mutable std::mutex stats_mutex_;
  EndpointStats stats_;
  std::uint64_t jitter_seed_;
  std::atomic<std::uint64_t> jitter_counter_{0};
};

class HttpChatClient final : public ChatClient {
 public:
  explicit HttpChatClient(std::shared_ptr<EndpointClient> endpoint) : endpoint_(std::move(endpoint)) {}
  std::string complete(const ChatRequest& request) override;
  std::string id() const override { return endpoint_->config().model_name; }

 private:
  std::shared_ptr<EndpointClient> endpoint_;
};

class HttpGeneratorClient final : public KnowledgeGenerator {
 public:
  HttpGeneratorClient(std::shared_ptr<EndpointClient> endpoint, std::size_t n_tokens, std::size_t hidden_dim)
      : endpoint_(std::move(endpoint)), n_tokens_(n_tokens), hidden_dim_(hidden_dim) {}
  std::size_t n_tokens() const override { return n_tokens_; }
  std::size_t hidden_dim() const override { return hidden_dim_; }
  std::string id() const override { return endpoint_->config().model_name; }

 protected:
  std::string generate(const GeneratorRequest& request) override;

 private:
  std::shared_ptr<EndpointClient> endpoint_;
  std::size_t n_tokens_;
  std::size_t hidden_dim_;
};

}  // namespace blade::llm
