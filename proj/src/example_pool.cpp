#include "contextgpt/example_pool.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <ctime>
#include <mutex>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "contextgpt/io.hpp"
#include "contextgpt/kernels.hpp"

namespace contextgpt {

nlohmann::json example_to_json(const Example& e) {
  return {{"id", e.id},
          {"context", assignments_to_json(e.context.assignments)},
          {"z", e.context.window_seconds},
          {"consistent", e.consistent},
          {"note", e.note},
          {"created_at", e.created_at}};
}

Example example_from_json(const nlohmann::json& j) {
  try {
    Example e;
    e.id = j.at("id").get<std::string>();
    e.context.assignments = assignments_from_json(j.at("context"));
    e.context.window_seconds = j.at("z").get<double>();
    e.consistent = j.at("consistent").get<std::vector<std::string>>();
    e.note = j.value("note", "");
    e.created_at = j.value("created_at", "");
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("example: ") + ex.what());
  }
}

void validate_example(const ContextSchema& schema, Example& e) {
  if (e.id.empty()) throw ValidationError("example id is empty");
  auto report = validate_snapshot(schema, e.context);
  if (!report.ok()) throw ValidationError("example " + e.id + ": " + report.summary());
  if (e.consistent.empty()) throw ValidationError("example " + e.id + " has no consistent activities");
  std::set<std::size_t> seen;
  for (auto& name : e.consistent) {
    auto i = schema.activities().find(name);
    if (!i) throw ValidationError("example " + e.id + ": unknown activity '" + name + "'");
    if (!seen.insert(*i).second) throw ValidationError("example " + e.id + ": activity listed twice: " + name);
    name = schema.activities()[*i];
  }
}

std::string text_digest(std::string_view text) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 0xF];
  }
  return out;
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

}  // namespace

HashEmbedder::HashEmbedder(std::size_t dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {
  if (dimension_ == 0) throw ValidationError("embedding dimension must be positive");
}

std::string HashEmbedder::id() const {
  return "hash-d" + std::to_string(dimension_) + "-s" + std::to_string(seed_);
}

std::vector<float> HashEmbedder::embed(std::string_view text) {
  auto tokens = tokenize(text);
  std::vector<std::string> features = tokens;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) features.push_back(tokens[i] + ' ' + tokens[i + 1]);
  if (features.empty()) features.emplace_back();

  std::vector<double> acc(dimension_, 0.0);
  for (const auto& f : features) {
    std::uint64_t state = fnv1a(f) ^ (seed_ * 0x9E3779B97F4A7C15ULL);
    for (auto& a : acc) {
      double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
      a += 2.0 * u - 1.0;
    }
  }
  double n = 0.0;
  for (double a : acc) n += a * a;
  n = std::sqrt(n);
  std::vector<float> out(dimension_);
  for (std::size_t i = 0; i < dimension_; ++i) out[i] = static_cast<float>(n > 0 ? acc[i] / n : 1.0);
  return out;
}

HttpEmbedder::HttpEmbedder(HttpEmbedderConfig config)
    : config_(std::move(config)), endpoint_(HttpEndpoint::parse(config_.url)) {}

std::vector<float> HttpEmbedder::embed(std::string_view text) {
  nlohmann::json req = {{"model", config_.model}, {"input", std::string(text)}};
  auto res = post_json(endpoint_, req, config_.api_key, config_.http);
  std::vector<float> v;
  try {
    v = res.body.at("data").at(0).at("embedding").get<std::vector<float>>();
  } catch (const nlohmann::json::exception& e) {
    throw RequestError(std::string("malformed embeddings response: ") + e.what());
  }
  if (v.size() != config_.dimension)
    throw RequestError("embedding has dimension " + std::to_string(v.size()) + ", expected " +
                       std::to_string(config_.dimension));
  return v;
}

// ---------------------------------------------------------------------------

EmbeddingStore::EmbeddingStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  io::for_each_jsonl(path_, [&](std::size_t lineno, const nlohmann::json& j) {
    try {
      rows_[{j.at("id").get<std::string>(), j.at("embedder_id").get<std::string>(),
             j.at("text_hash").get<std::string>()}] = j.at("vector").get<std::vector<float>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path_.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  });
}

std::optional<std::vector<float>> EmbeddingStore::lookup(const std::string& id, const std::string& embedder_id,
                                                         const std::string& text_hash) const {
  std::shared_lock lock(mutex_);
  auto it = rows_.find({id, embedder_id, text_hash});
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingStore::put(const std::string& id, const std::string& embedder_id, const std::string& text_hash,
                         std::vector<float> vector) {
  std::unique_lock lock(mutex_);
  // One row per (id, embedder): a re-rendered example replaces its stale row.
  for (auto it = rows_.begin(); it != rows_.end();) {
    if (std::get<0>(it->first) == id && std::get<1>(it->first) == embedder_id) {
      it = rows_.erase(it);
    } else {
      ++it;
    }
  }
  rows_[{id, embedder_id, text_hash}] = std::move(vector);
}

void EmbeddingStore::retain(const std::vector<std::string>& keep) {
  std::set<std::string> ids(keep.begin(), keep.end());
  std::unique_lock lock(mutex_);
  std::erase_if(rows_, [&](const auto& row) { return !ids.contains(std::get<0>(row.first)); });
}

std::size_t EmbeddingStore::size() const {
  std::shared_lock lock(mutex_);
  return rows_.size();
}

void EmbeddingStore::save() const {
  if (path_.empty()) return;
  std::string out;
  {
    std::shared_lock lock(mutex_);
    for (const auto& [key, vec] : rows_) {
      nlohmann::json j = {{"id", std::get<0>(key)},
                          {"embedder_id", std::get<1>(key)},
                          {"text_hash", std::get<2>(key)},
                          {"vector", vec}};
      out += j.dump();
      out += '\n';
    }
  }
  io::write_file_atomic(path_, out);
}

// ---------------------------------------------------------------------------

Pool::Pool(ContextSchema schema, std::filesystem::path path) : schema_(std::move(schema)), path_(std::move(path)) {}

std::unique_ptr<Pool> Pool::open(ContextSchema schema, const std::filesystem::path& path) {
  auto pool = std::make_unique<Pool>(std::move(schema), path);
  if (!path.empty() && std::filesystem::exists(path)) {
    std::set<std::string> ids;
    io::for_each_jsonl(path, [&](std::size_t lineno, const nlohmann::json& j) {
      Example e;
      try {
        e = example_from_json(j);
        validate_example(pool->schema_, e);
      } catch (const Error& ex) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
      }
      if (!ids.insert(e.id).second)
        throw DuplicateIdError(path.string() + ":" + std::to_string(lineno) + ": duplicate id " + e.id);
      pool->examples_.push_back(std::move(e));
    });
  }
  return pool;
}

void Pool::add(Example e) {
  validate_example(schema_, e);
  if (e.created_at.empty()) e.created_at = utc_timestamp();
  std::unique_lock lock(mutex_);
  for (const auto& x : examples_)
    if (x.id == e.id) throw DuplicateIdError("duplicate id: " + e.id);
  examples_.push_back(std::move(e));
  try {
    persist_locked();
  } catch (...) {
    examples_.pop_back();
    throw;
  }
}

void Pool::remove(const std::string& id) {
  std::unique_lock lock(mutex_);
  auto it = std::find_if(examples_.begin(), examples_.end(), [&](const Example& e) { return e.id == id; });
  if (it == examples_.end()) throw UnknownIdError("unknown id: " + id);
  Example removed = *it;
  auto pos = examples_.erase(it);
  try {
    persist_locked();
  } catch (...) {
    examples_.insert(pos, std::move(removed));
    throw;
  }
}

std::vector<Example> Pool::list() const {
  std::shared_lock lock(mutex_);
  return examples_;
}

std::size_t Pool::size() const {
  std::shared_lock lock(mutex_);
  return examples_.size();
}

void Pool::persist_locked() const {
  if (path_.empty()) return;
  std::string out;
  for (const auto& e : examples_) {
    out += example_to_json(e).dump();
    out += '\n';
  }
  io::write_file_atomic(path_, out);
}

// ---------------------------------------------------------------------------

EmbedResult embed_pool(std::span<const Example> examples, const Renderer& render, Embedder& embedder,
                       EmbeddingStore& store) {
  EmbedResult result;
  const std::string eid = embedder.id();
  for (const auto& e : examples) {
    try {
      std::string text = render(e.context);
      std::string hash = text_digest(text);
      EmbeddedExample ee{e, {}, eid, hash};
      if (auto cached = store.lookup(e.id, eid, hash); cached && cached->size() == embedder.dimension()) {
        ee.vector = std::move(*cached);
        ++result.reused;
      } else {
        ee.vector = embedder.embed(text);
        if (ee.vector.size() != embedder.dimension())
          throw Error("embedder returned dimension " + std::to_string(ee.vector.size()));
        store.put(e.id, eid, hash, ee.vector);
        ++result.computed;
      }
      result.embedded.push_back(std::move(ee));
    } catch (const std::exception& ex) {
      result.failures.push_back({e.id, ex.what()});
    }
  }
  return result;
}

std::vector<double> similarity_scores(std::span<const float> query, std::span<const EmbeddedExample> pool) {
  std::vector<std::span<const float>> rows;
  rows.reserve(pool.size());
  for (const auto& p : pool) rows.emplace_back(p.vector);
  std::vector<double> scores(pool.size());
  kernels::cosine_scores(query, rows, scores);
  return scores;
}

Selection select_by_embedding(std::span<const float> query, std::span<const EmbeddedExample> pool, double k) {
  if (!(k >= 0.0 && k <= 1.0)) throw ValidationError("threshold k must lie in [0, 1], got " + format_number(k));
  Selection sel;
  sel.scores = similarity_scores(query, pool);
  for (std::size_t i : kernels::rank_above(sel.scores, k)) sel.selected.push_back({pool[i].example, sel.scores[i]});
  if (k == 0.0) {
    std::size_t nonpositive = std::count_if(sel.scores.begin(), sel.scores.end(), [](double s) { return s <= 0.0; });
    if (nonpositive > 0)
      sel.diagnostics.push_back(std::to_string(nonpositive) +
                                " example(s) have non-positive similarity and are excluded at k=0");
  }
  return sel;
}

Selection select_examples(const ContextSnapshot& snap, std::span<const EmbeddedExample> pool, double k,
                          const Renderer& render, Embedder& embedder) {
  if (!(k >= 0.0 && k <= 1.0)) throw ValidationError("threshold k must lie in [0, 1], got " + format_number(k));
  if (pool.empty()) return {};
  auto query = embedder.embed(render(snap));
  return select_by_embedding(query, pool, k);
}

}  // namespace contextgpt
