#include "contextgpt/llm_gateway.hpp"

#include <algorithm>
#include <fstream>

#include "contextgpt/example_pool.hpp"
#include "contextgpt/io.hpp"

namespace contextgpt {

std::string complete(const CompletionRequest& req, Backend& backend) {
  if (!(req.temperature >= 0.0)) throw RequestError("temperature must be non-negative");
  if (req.prompt.messages.empty()) throw RequestError("prompt has no messages");
  return backend.complete(req);
}

// ---------------------------------------------------------------------------

void ContextRegistry::add(const std::string& key, const ContextSnapshot& snap) {
  std::unique_lock lock(mutex_);
  entries_.emplace(key, snap);
}

std::optional<ContextSnapshot> ContextRegistry::find(const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

MockBackend::MockBackend(RuleSet rules, std::shared_ptr<const ContextRegistry> registry)
    : rules_(std::move(rules)), registry_(std::move(registry)) {}

std::string MockBackend::complete(const CompletionRequest& req) {
  ++calls_;
  auto snap = registry_->find(req.canonical_key);
  if (!snap) throw UnknownContextError("mock backend: unknown canonical key '" + req.canonical_key + "'");

  std::size_t matched = 0;
  for (const auto& r : rules_.rules()) matched += r.matches(*snap) ? 1 : 0;
  auto consistent = rules_.evaluate(*snap);
  std::vector<std::string> excluded;
  for (const auto& name : rules_.activities().names())
    if (std::find(consistent.begin(), consistent.end(), name) == consistent.end()) excluded.push_back(name);

  std::string out = "Reasoning: " + std::to_string(matched) + " of " + std::to_string(rules_.rules().size()) +
                    " constraints apply to this context";
  if (excluded.empty()) {
    out += "; no activity is ruled out.";
  } else {
    out += "; they rule out ";
    for (std::size_t i = 0; i < excluded.size(); ++i) out += (i ? ", " : "") + excluded[i];
    out += ".";
  }
  out += "\nConsistent activities: " + bracket_list(consistent);
  return out;
}

// ---------------------------------------------------------------------------

HttpBackend::HttpBackend(HttpBackendConfig config)
    : config_(std::move(config)),
      endpoint_(HttpEndpoint::parse(config_.url)),
      in_flight_(std::clamp<std::ptrdiff_t>(config_.max_in_flight, 1, 1024)) {}

std::string HttpBackend::complete(const CompletionRequest& req) {
  nlohmann::json body = {{"model", req.model.empty() ? config_.model : req.model},
                         {"temperature", req.temperature},
                         {"messages", req.prompt.to_json()}};
  in_flight_.acquire();
  HttpResult res;
  try {
    res = post_json(endpoint_, body, config_.api_key, config_.http);
  } catch (...) {
    in_flight_.release();
    throw;
  }
  in_flight_.release();

  try {
    const auto& choice = res.body.at("choices").at(0);
    const auto& message = choice.at("message");
    if (message.contains("refusal") && !message.at("refusal").is_null())
      throw RefusalError("provider refused: " + message.at("refusal").get<std::string>());
    if (choice.value("finish_reason", "") == "content_filter") throw RefusalError("provider content filter");
    if (!message.contains("content") || message.at("content").is_null()) throw RefusalError("empty completion");
    return message.at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw RequestError(std::string("malformed completion response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

nlohmann::json CacheEntry::to_json() const {
  return {{"canonical_key", canonical_key}, {"k", k},
          {"backend_id", backend_id},       {"response", response},
          {"vector", vector.to_json()},      {"timestamp", timestamp}};
}

CacheEntry CacheEntry::from_json(const nlohmann::json& j) {
  CacheEntry e;
  e.canonical_key = j.at("canonical_key").get<std::string>();
  e.k = j.at("k").get<double>();
  e.backend_id = j.at("backend_id").get<std::string>();
  e.response = j.at("response").get<std::string>();
  e.vector = ConsistencyVector(j.value("vector", std::vector<std::uint8_t>{}));
  e.timestamp = j.value("timestamp", "");
  return e;
}

CacheStore::CacheStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  io::for_each_jsonl(path_, [&](std::size_t lineno, const nlohmann::json& j) {
    try {
      auto e = CacheEntry::from_json(j);
      auto key = make_key(e.canonical_key, e.k, e.backend_id);
      entries_[key] = std::move(e);
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(path_.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  });
}

CacheStore::Key CacheStore::make_key(const std::string& key, double k, const std::string& backend_id) {
  return {key, format_number(k), backend_id};
}

std::optional<CacheEntry> CacheStore::lookup(const std::string& key, double k, const std::string& backend_id) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(make_key(key, k, backend_id));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void CacheStore::put(CacheEntry entry) {
  std::unique_lock lock(mutex_);
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::app);
    if (!out) throw Error("cannot append to cache " + path_.string());
    out << entry.to_json().dump() << '\n';
    out.flush();
    if (!out) throw Error("cache write failed for " + path_.string());
  }
  auto key = make_key(entry.canonical_key, entry.k, entry.backend_id);
  entries_[key] = std::move(entry);
}

void CacheStore::clear() {
  std::unique_lock lock(mutex_);
  entries_.clear();
  if (!path_.empty()) io::write_file_atomic(path_, "");
}

std::size_t CacheStore::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

// ---------------------------------------------------------------------------

CachedGateway::CachedGateway(Backend& backend, CacheStore& store, Extractor extract)
    : backend_(backend), store_(store), extract_(std::move(extract)) {}

CachedCompletion CachedGateway::complete(const CompletionRequest& req) {
  if (req.canonical_key.empty()) throw RequestError("request lacks a canonical key");
  const std::string bid = backend_.id();
  if (auto hit = store_.lookup(req.canonical_key, req.k, bid)) return {hit->response, hit->vector, true};

  std::promise<CachedCompletion> promise;
  std::shared_future<CachedCompletion> waiting;
  const auto flight_key = std::make_tuple(req.canonical_key, req.k);
  {
    std::lock_guard lock(inflight_mutex_);
    if (auto it = inflight_.find(flight_key); it != inflight_.end()) {
      waiting = it->second;
    } else {
      // Re-check: another caller may have finished between lookup and lock.
      if (auto hit = store_.lookup(req.canonical_key, req.k, bid)) return {hit->response, hit->vector, true};
      inflight_.emplace(flight_key, promise.get_future().share());
    }
  }
  if (waiting.valid()) {
    auto shared = waiting.get();
    shared.cache_hit = true;
    return shared;
  }

  try {
    ++backend_calls_;
    CachedCompletion result;
    result.response = contextgpt::complete(req, backend_);
    if (extract_) result.vector = extract_(result.response);
    store_.put({req.canonical_key, req.k, bid, result.response, result.vector, utc_timestamp()});
    promise.set_value(result);
    std::lock_guard lock(inflight_mutex_);
    inflight_.erase(flight_key);
    return result;
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(inflight_mutex_);
    inflight_.erase(flight_key);
    throw;
  }
}

CachedCompletion cached_complete(const CompletionRequest& req, Backend& backend, CacheStore& store,
                                 const CachedGateway::Extractor& extract) {
  CachedGateway gateway(backend, store, extract);
  return gateway.complete(req);
}

}  // namespace contextgpt
