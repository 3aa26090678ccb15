#include "blade/llm/http_client.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "blade/error.hpp"
#include "blade/rng.hpp"

// After Eigen: resolv.h defines a _res macro.
#include <httplib.h>

namespace blade::llm {

void EndpointConfig::validate() const {
  if (base_url.empty()) {
    throw Error(Errc::InvalidConfig, "endpoint base_url is empty");
  }
  if (timeout.count() <= 0) {
    throw Error(Errc::InvalidConfig, "endpoint timeout must be positive");
  }
  if (max_retries < 0) {
    throw Error(Errc::InvalidConfig, "endpoint max_retries must be non-negative");
  }
  if (max_concurrency < 1) {
    throw Error(Errc::InvalidConfig, "endpoint max_concurrency must be at least 1");
  }
  if (requests_per_minute && !(*requests_per_minute > 0.0)) {
    throw Error(Errc::InvalidConfig, "endpoint requests_per_minute must be positive");
  }
}

EndpointConfig EndpointConfig::from_json(const nlohmann::json& doc) {
  EndpointConfig cfg;
  cfg.base_url = doc.at("base_url").get<std::string>();
  cfg.model_name = doc.value("model", std::string());
  cfg.auth_env_var = doc.value("auth_env_var", std::string());
  cfg.timeout = std::chrono::milliseconds(static_cast<long>(doc.value("timeout_s", 60.0) * 1000.0));
  cfg.max_retries = doc.value("max_retries", 3);
  cfg.max_concurrency = doc.value("max_concurrency", 4);
  if (doc.contains("requests_per_minute") && !doc.at("requests_per_minute").is_null()) {
    cfg.requests_per_minute = doc.at("requests_per_minute").get<double>();
  }
  cfg.path = doc.value("path", cfg.path);
  cfg.validate();
  return cfg;
}

nlohmann::json EndpointConfig::to_json() const {
  nlohmann::json out = {{"base_url", base_url},
                        {"model", model_name},
                        {"auth_env_var", auth_env_var},
                        {"timeout_s", static_cast<double>(timeout.count()) / 1000.0},
                        {"max_retries", max_retries},
                        {"max_concurrency", max_concurrency},
                        {"path", path}};
  out["requests_per_minute"] = requests_per_minute ? nlohmann::json(*requests_per_minute) : nlohmann::json(nullptr);
  return out;
}

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int retry, double jitter_draw,
                                        std::chrono::milliseconds previous) {
  const double nominal = static_cast<double>(policy.initial_delay.count()) * std::pow(policy.multiplier, retry);
  const double capped = std::min(nominal, static_cast<double>(policy.max_delay.count()));
  const double jittered = capped * (1.0 + policy.jitter * std::clamp(jitter_draw, 0.0, 1.0));
  return std::max(previous, std::chrono::milliseconds(static_cast<long>(jittered)));
}

namespace {

class HttplibTransport final : public Transport {
 public:
  explicit HttplibTransport(std::string base_url) : base_url_(std::move(base_url)) {}

  HttpResponse post(const std::string& path, const Headers& headers, const std::string& body,
                    std::chrono::milliseconds timeout) override {
    httplib::Client client(base_url_);
    const auto seconds = timeout.count() / 1000;
    const auto micros = (timeout.count() % 1000) * 1000;
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);
    httplib::Headers http_headers;
    for (const auto& [key, value] : headers) {
      http_headers.emplace(key, value);
    }
    auto result = client.Post(path, http_headers, body, "application/json");
    if (!result) {
      const auto err = result.error();
      throw TransportFailure{err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout,
                             httplib::to_string(err)};
    }
    return HttpResponse{result->status, result->body};
  }

 private:
  std::string base_url_;
};

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

std::shared_ptr<Transport> make_http_transport(const std::string& base_url) {
  return std::make_shared<HttplibTransport>(base_url);
}

RateLimiter::RateLimiter(double requests_per_minute)
    : interval_(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
          std::chrono::duration<double>(60.0 / requests_per_minute))),
      next_free_(std::chrono::steady_clock::now()) {
  if (!(requests_per_minute > 0.0)) {
    throw Error(Errc::InvalidConfig, "rate must be positive");
  }
}

void RateLimiter::acquire() {
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mutex_);
    slot = std::max(std::chrono::steady_clock::now(), next_free_);
    next_free_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

ConcurrencyLimiter::ConcurrencyLimiter(int limit) : available_(limit) {
  if (limit < 1) {
    throw Error(Errc::InvalidConfig, "concurrency limit must be at least 1");
  }
}

void ConcurrencyLimiter::acquire() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [this] { return available_ > 0; });
  --available_;
}

void ConcurrencyLimiter::release() {
  {
    std::lock_guard lock(mutex_);
    ++available_;
  }
  cv_.notify_one();
}

EndpointClient::EndpointClient(EndpointConfig config, std::shared_ptr<Transport> transport, RetryPolicy policy,
                               Sleeper sleeper, std::uint64_t jitter_seed)
    : config_((config.validate(), std::move(config))),
      transport_(std::move(transport)),
      policy_(policy),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })),
      in_flight_(config_.max_concurrency),
      jitter_seed_(jitter_seed) {
  if (config_.requests_per_minute) {
    rate_.emplace(*config_.requests_per_minute);
  }
}

EndpointStats EndpointClient::stats() const {
  std::lock_guard lock(stats_mutex_);
  return stats_;
}

Transport::Headers EndpointClient::auth_headers() const {
  Transport::Headers headers;
  if (config_.auth_env_var.empty()) {
    return headers;
  }
  const char* token = std::getenv(config_.auth_env_var.c_str());
  if (token == nullptr || *token == '\0') {
    throw Error(Errc::AuthError, "environment variable " + config_.auth_env_var + " is not set");
  }
  headers.emplace_back("Authorization", std::string("Bearer ") + token);
  return headers;
}

std::string EndpointClient::post_json(const nlohmann::json& body) {
  const auto headers = auth_headers();
  const std::string payload = body.dump();
  {
    std::lock_guard lock(stats_mutex_);
    ++stats_.requests;
  }
  std::chrono::milliseconds previous_delay{0};
  for (int attempt = 0;; ++attempt) {
    if (rate_) {
      rate_->acquire();
    }
    std::optional<HttpResponse> response;
    std::optional<TransportFailure> failure;
    in_flight_.acquire();
    try {
      response = transport_->post(config_.path, headers, payload, config_.timeout);
    } catch (const TransportFailure& f) {
      failure = f;
    } catch (...) {
      in_flight_.release();
      throw;
    }
    in_flight_.release();
    {
      std::lock_guard lock(stats_mutex_);
      ++stats_.attempts;
    }

    if (response) {
      if (response->status >= 200 && response->status < 300) {
        return response->body;
      }
      if (response->status == 401 || response->status == 403) {
        throw Error(Errc::AuthError, "endpoint rejected credentials (HTTP " + std::to_string(response->status) + ")");
      }
      if (!retryable_status(response->status)) {
        throw Error(Errc::HttpError, "HTTP " + std::to_string(response->status) + ": " + response->body.substr(0, 200));
      }
    }
    if (attempt >= config_.max_retries) {
      if (failure) {
        throw Error(failure->timed_out ? Errc::Timeout : Errc::TransportError,
                    failure->message + " after " + std::to_string(attempt + 1) + " attempts");
      }
      if (response->status == 429) {
        throw Error(Errc::RateLimited, "still rate limited after " + std::to_string(attempt + 1) + " attempts");
      }
      throw Error(Errc::HttpError, "HTTP " + std::to_string(response->status) + " after " +
                                       std::to_string(attempt + 1) + " attempts");
    }
    Rng jitter_rng(mix_seed(jitter_seed_, jitter_counter_.fetch_add(1)));
    const auto delay = backoff_delay(policy_, attempt, jitter_rng.uniform01(), previous_delay);
    previous_delay = delay;
    {
      std::lock_guard lock(stats_mutex_);
      ++stats_.retries;
      stats_.delays.push_back(delay);
    }
    sleeper_(delay);
  }
}

std::string HttpChatClient::complete(const ChatRequest& request) {
  request.validate();
  return parse_chat_response(endpoint_->post_json(chat_request_body(endpoint_->config().model_name, request)));
}

std::string HttpGeneratorClient::generate(const GeneratorRequest& request) {
  return parse_chat_response(endpoint_->post_json(generator_request_body(endpoint_->config().model_name, request)));
}

}  // namespace blade::llm
