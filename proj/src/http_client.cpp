#include "contextgpt/http_client.hpp"

#include <thread>

#include <httplib.h>

namespace contextgpt {

HttpEndpoint HttpEndpoint::parse(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("URL lacks a scheme: " + url);
  std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ValidationError("unsupported URL scheme: " + scheme);
  auto path_start = url.find('/', scheme_end + 3);
  HttpEndpoint ep;
  if (path_start == std::string::npos) {
    ep.origin = url;
    ep.path = "/";
  } else {
    ep.origin = url.substr(0, path_start);
    ep.path = url.substr(path_start);
  }
  if (ep.origin.size() <= scheme_end + 3) throw ValidationError("URL lacks a host: " + url);
  return ep;
}

HttpResult post_json(const HttpEndpoint& endpoint, const nlohmann::json& body, const std::string& api_key,
                     const HttpOptions& options) {
  httplib::Client client(endpoint.origin);
  client.set_connection_timeout(options.timeout);
  client.set_read_timeout(options.timeout);
  client.set_write_timeout(options.timeout);

  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
  const std::string payload = body.dump();

  auto backoff = options.retry.initial_backoff;
  std::string last_error;
  HttpResult result;
  for (int attempt = 0; attempt <= options.retry.max_retries; ++attempt) {
    if (attempt > 0) {
      if (options.sleep) {
        options.sleep(backoff);
      } else {
        std::this_thread::sleep_for(backoff);
      }
      backoff *= 2;
    }
    result.attempts = attempt + 1;
    auto res = client.Post(endpoint.path, headers, payload, "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 401 || res->status == 403)
      throw AuthError("authentication failed (HTTP " + std::to_string(res->status) + ")");
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300)
      throw RequestError("request rejected (HTTP " + std::to_string(res->status) + "): " + res->body);
    try {
      result.body = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error&) {
      throw RequestError("response is not JSON");
    }
    return result;
  }
  throw TransportError("giving up after " + std::to_string(result.attempts) + " attempts: " + last_error);
}

}  // namespace contextgpt
