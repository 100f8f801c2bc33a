#pragma once

// Chat-completion backends and the per-context response cache.

#include <atomic>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <tuple>

#include "contextgpt/context_core.hpp"
#include "contextgpt/http_client.hpp"
#include "contextgpt/knowledge_baseline.hpp"
#include "contextgpt/prompt_builder.hpp"

namespace contextgpt {

struct CompletionRequest {
  Prompt prompt;
  double temperature = 0.0;
  std::string model;
  /// Cache identity: the context and the selection threshold that shaped the prompt.
  std::string canonical_key;
  double k = 0.0;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  /// Text of the first completion. Must be safe to call concurrently.
  virtual std::string complete(const CompletionRequest& req) = 0;
};

/// Validates the request and forwards it to `backend`.
std::string complete(const CompletionRequest& req, Backend& backend);

/// canonical key -> snapshot, filled by the pipeline before prompting.
class ContextRegistry {
 public:
  void add(const std::string& key, const ContextSnapshot& snap);
  std::optional<ContextSnapshot> find(const std::string& key) const;

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, ContextSnapshot> entries_;
};

class UnknownContextError : public Error {
 public:
  using Error::Error;
};

/// Offline backend answering from a rule set. Ignores the prompt text; the
/// context comes from the registry via the request's canonical key.
class MockBackend final : public Backend {
 public:
  MockBackend(RuleSet rules, std::shared_ptr<const ContextRegistry> registry);

  std::string id() const override { return "mock"; }
  std::string complete(const CompletionRequest& req) override;
  std::size_t calls() const { return calls_.load(); }

 private:
  RuleSet rules_;
  std::shared_ptr<const ContextRegistry> registry_;
  std::atomic<std::size_t> calls_{0};
};

struct HttpBackendConfig {
  std::string url;
  std::string model = "gpt-3.5-turbo";
  std::string api_key;
  std::ptrdiff_t max_in_flight = 4;
  HttpOptions http;
};

/// Chat-completions JSON protocol:
///   request  {model, temperature, messages: [{role, content}]}
///   response {choices: [{message: {content}}]}
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  std::string id() const override { return "http:" + config_.model; }
  std::string complete(const CompletionRequest& req) override;

 private:
  HttpBackendConfig config_;
  HttpEndpoint endpoint_;
  std::counting_semaphore<1024> in_flight_;
};

struct CacheEntry {
  std::string canonical_key;
  double k = 0.0;
  std::string backend_id;
  std::string response;
  ConsistencyVector vector;
  std::string timestamp;

  nlohmann::json to_json() const;
  static CacheEntry from_json(const nlohmann::json& j);
};

/// Append-only JSONL response cache keyed by (canonical key, k, backend id).
/// An empty path keeps it in memory.
class CacheStore {
 public:
  CacheStore() = default;
  explicit CacheStore(std::filesystem::path path);

  std::optional<CacheEntry> lookup(const std::string& key, double k, const std::string& backend_id) const;
  void put(CacheEntry entry);
  void clear();
  std::size_t size() const;

 private:
  using Key = std::tuple<std::string, std::string, std::string>;
  static Key make_key(const std::string& key, double k, const std::string& backend_id);

  std::filesystem::path path_;
  mutable std::shared_mutex mutex_;
  std::map<Key, CacheEntry> entries_;
};

struct CachedCompletion {
  std::string response;
  ConsistencyVector vector;
  bool cache_hit = false;
};

/// Response cache in front of a backend. Concurrent requests for the same
/// (key, k, backend) share one backend call.
class CachedGateway {
 public:
  using Extractor = std::function<ConsistencyVector(const std::string&)>;

  CachedGateway(Backend& backend, CacheStore& store, Extractor extract);

  CachedCompletion complete(const CompletionRequest& req);
  std::size_t backend_calls() const { return backend_calls_.load(); }
  Backend& backend() { return backend_; }

 private:
  Backend& backend_;
  CacheStore& store_;
  Extractor extract_;
  std::mutex inflight_mutex_;
  std::map<std::tuple<std::string, double>, std::shared_future<CachedCompletion>> inflight_;
  std::atomic<std::size_t> backend_calls_{0};
};

/// Single-shot form of CachedGateway::complete.
CachedCompletion cached_complete(const CompletionRequest& req, Backend& backend, CacheStore& store,
                                 const CachedGateway::Extractor& extract);

}  // namespace contextgpt
