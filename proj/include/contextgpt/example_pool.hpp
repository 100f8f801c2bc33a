#pragma once

// The pool of curated <context, consistent activities> examples, their
// embeddings, and similarity-based example selection.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contextgpt/context_core.hpp"
#include "contextgpt/http_client.hpp"

namespace contextgpt {

struct Example {
  std::string id;
  ContextSnapshot context;
  std::vector<std::string> consistent;
  std::string note;
  std::string created_at;
};

nlohmann::json example_to_json(const Example& e);
Example example_from_json(const nlohmann::json& j);

/// Context valid, `consistent` non-empty and drawn from the activity set.
/// Activity names are rewritten to the set's canonical casing.
void validate_example(const ContextSchema& schema, Example& e);

/// Renders a context to the text that gets embedded and prompted.
using Renderer = std::function<std::string(const ContextSnapshot&)>;

/// Hex SHA-256 of `text`.
std::string text_digest(std::string_view text);

std::string utc_timestamp();

// ---------------------------------------------------------------------------

class Embedder {
 public:
  virtual ~Embedder() = default;
  /// Identifies the model; embeddings from different ids are never mixed.
  virtual std::string id() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<float> embed(std::string_view text) = 0;
};

/// Offline embedder: each word and word bigram maps to a seeded pseudo-random
/// direction; a text embeds to the normalized sum. Texts sharing vocabulary
/// get high cosine similarity, which keeps selection behavior realistic.
class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dimension = 128, std::uint64_t seed = 0);
  std::string id() const override;
  std::size_t dimension() const override { return dimension_; }
  std::vector<float> embed(std::string_view text) override;

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

struct HttpEmbedderConfig {
  std::string url;
  std::string model = "all-MiniLM-L6-v2";
  std::size_t dimension = 384;
  std::string api_key;
  HttpOptions http;
};

/// Embeddings endpoint: POST {model, input} -> {data: [{embedding: [..]}]}.
class HttpEmbedder final : public Embedder {
 public:
  explicit HttpEmbedder(HttpEmbedderConfig config);
  std::string id() const override { return "http:" + config_.model; }
  std::size_t dimension() const override { return config_.dimension; }
  std::vector<float> embed(std::string_view text) override;

 private:
  HttpEmbedderConfig config_;
  HttpEndpoint endpoint_;
};

// ---------------------------------------------------------------------------

struct EmbeddedExample {
  Example example;
  std::vector<float> vector;
  std::string embedder_id;
  std::string text_hash;
};

/// Persisted embedding side-table keyed by (example id, embedder id, text hash).
/// An empty path keeps the table in memory only.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(std::filesystem::path path);

  std::optional<std::vector<float>> lookup(const std::string& id, const std::string& embedder_id,
                                           const std::string& text_hash) const;
  void put(const std::string& id, const std::string& embedder_id, const std::string& text_hash,
           std::vector<float> vector);
  /// Drops rows whose id is not in `keep`.
  void retain(const std::vector<std::string>& keep);
  std::size_t size() const;
  /// Atomic rewrite of the side-table file.
  void save() const;

 private:
  using Key = std::tuple<std::string, std::string, std::string>;
  std::filesystem::path path_;
  mutable std::shared_mutex mutex_;
  std::map<Key, std::vector<float>> rows_;
};

class DuplicateIdError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UnknownIdError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Insertion-ordered example pool persisted as JSONL. Mutations are
/// serialized and written atomically; readers get consistent snapshots.
class Pool {
 public:
  explicit Pool(ContextSchema schema, std::filesystem::path path = {});

  /// Loads `path` if it exists; otherwise starts empty.
  static std::unique_ptr<Pool> open(ContextSchema schema, const std::filesystem::path& path);

  void add(Example e);
  void remove(const std::string& id);
  std::vector<Example> list() const;
  std::size_t size() const;
  const ContextSchema& schema() const { return schema_; }

 private:
  void persist_locked() const;

  ContextSchema schema_;
  std::filesystem::path path_;
  mutable std::shared_mutex mutex_;
  std::vector<Example> examples_;
};

// ---------------------------------------------------------------------------

struct EmbedFailure {
  std::string id;
  std::string error;
};

struct EmbedResult {
  std::vector<EmbeddedExample> embedded;
  std::vector<EmbedFailure> failures;
  std::size_t computed = 0;
  std::size_t reused = 0;
};

/// Embeds every example's rendered description, reusing stored vectors whose
/// (embedder id, text hash) still match. Failures are collected, not thrown.
EmbedResult embed_pool(std::span<const Example> examples, const Renderer& render, Embedder& embedder,
                       EmbeddingStore& store);

struct ScoredExample {
  Example example;
  double score = 0.0;
};

struct Selection {
  std::vector<ScoredExample> selected;
  /// Score of every pool example, in pool order.
  std::vector<double> scores;
  std::vector<std::string> diagnostics;
};

/// Cosine similarity of `query` against every candidate (OpenMP kernel).
std::vector<double> similarity_scores(std::span<const float> query, std::span<const EmbeddedExample> pool);

/// Examples with score strictly above `k`, by descending score, ties in pool
/// order. Throws ValidationError if k is outside [0, 1].
Selection select_by_embedding(std::span<const float> query, std::span<const EmbeddedExample> pool, double k);

/// Renders and embeds `snap`, then selects as above.
Selection select_examples(const ContextSnapshot& snap, std::span<const EmbeddedExample> pool, double k,
                          const Renderer& render, Embedder& embedder);

}  // namespace contextgpt
