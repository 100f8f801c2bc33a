#pragma once

// Minimal JSON-over-HTTP POST with retry, shared by the chat-completion
// backend and the embeddings provider.

#include <chrono>
#include <functional>
#include <string>

#include <nlohmann/json.hpp>

#include "contextgpt/error.hpp"

namespace contextgpt {

/// No usable response after all retries (connection failure, 5xx, 429).
class TransportError : public Error {
 public:
  using Error::Error;
};

/// 401/403. Never retried.
class AuthError : public Error {
 public:
  using Error::Error;
};

/// Any other 4xx, or a response body that is not the expected JSON.
class RequestError : public Error {
 public:
  using Error::Error;
};

/// The provider answered but declined to produce content.
class RefusalError : public Error {
 public:
  using Error::Error;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{250};
};

struct HttpEndpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // starts with '/'

  static HttpEndpoint parse(const std::string& url);
};

struct HttpOptions {
  RetryPolicy retry;
  std::chrono::seconds timeout{60};
  /// Replaced in tests to avoid real sleeps.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct HttpResult {
  nlohmann::json body;
  int attempts = 0;
};

/// POSTs `body` with a bearer token (if non-empty). Backoff doubles per retry.
HttpResult post_json(const HttpEndpoint& endpoint, const nlohmann::json& body, const std::string& api_key,
                     const HttpOptions& options);

}  // namespace contextgpt
