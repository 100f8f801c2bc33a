#pragma once

// End-to-end flow: context windows in, consistency vectors out.

#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contextgpt/context2text.hpp"
#include "contextgpt/context_core.hpp"
#include "contextgpt/example_pool.hpp"
#include "contextgpt/extractor.hpp"
#include "contextgpt/knowledge_baseline.hpp"
#include "contextgpt/llm_gateway.hpp"
#include "contextgpt/prompt_builder.hpp"

namespace contextgpt {

struct WindowRecord {
  std::string window_id;
  std::string start;
  ContextSnapshot context;  // carries user and window length
  std::optional<std::string> label;

  nlohmann::json to_json() const;
};

struct IngestError {
  std::size_t line = 0;
  std::string message;
};

struct IngestResult {
  std::vector<WindowRecord> records;
  std::vector<IngestError> errors;
};

/// Reads a windows JSONL file {window_id, user, start, z, context, label?}.
/// Bad lines are reported with their line number and skipped.
IngestResult ingest_windows(const std::filesystem::path& path, const ContextSchema& schema);
IngestResult ingest_windows(std::istream& in, const ContextSchema& schema);

std::string format_windows_file(std::span<const WindowRecord> windows);

enum class BackendKind { mock, http };

struct RunConfig {
  std::filesystem::path schema;
  std::filesystem::path phrases;
  std::filesystem::path templ;
  std::filesystem::path pool;
  /// Defaults to "<pool>.emb.jsonl".
  std::filesystem::path embeddings;
  std::filesystem::path rules;
  std::filesystem::path cache;
  std::filesystem::path out;
  double k = 0.5;
  BackendKind backend = BackendKind::mock;
  std::size_t max_in_flight = 4;
  double temperature = 0.0;
  std::size_t length_budget = kDefaultLengthBudget;

  std::string embedder = "hash";  // "hash" | "http"
  std::size_t embedding_dim = 128;
  std::uint64_t embedding_seed = 0;
  HttpBackendConfig http;
  HttpEmbedderConfig http_embedder;
  ExtractionPolicy policy;

  /// Reads a JSON config; relative paths resolve against the file's directory.
  static RunConfig load(const std::filesystem::path& path);
  void merge_json(const nlohmann::json& doc, const std::filesystem::path& base);
  /// Throws ValidationError naming the first problem.
  void validate() const;
};

/// Everything the pipeline computed for one context.
struct ContextOutcome {
  std::string canonical_key;
  std::string description;
  Selection selection;
  Prompt prompt;
  std::size_t estimated_length = 0;
  std::string response;
  Extraction extraction;
  bool cache_hit = false;
  std::optional<std::string> failure;

  nlohmann::json to_json(const ActivitySet& acts) const;
};

struct RunSummary {
  std::size_t windows = 0;
  std::size_t unique_contexts = 0;
  std::size_t backend_calls = 0;
  std::size_t cache_hits = 0;
  std::size_t fallbacks = 0;
  std::size_t failures = 0;
  double examples_per_prompt_mean = 0.0;
  std::size_t max_prompt_length = 0;
  std::size_t prompts_over_budget = 0;
  std::map<std::string, std::size_t> unknown_names;
  double k = 0.0;
  std::string backend_id;

  nlohmann::json to_json() const;
};

struct BatchResult {
  std::vector<VectorRecord> rows;
  RunSummary summary;
};

/// Shared pipeline behind the CLI, the service probe and batch runs.
class Pipeline {
 public:
  /// Loads every artifact named by `config`. The backend and embedder are
  /// built from the config unless overrides are given.
  explicit Pipeline(RunConfig config, std::unique_ptr<Backend> backend = nullptr,
                    std::unique_ptr<Embedder> embedder = nullptr);

  const ContextSchema& schema() const { return schema_; }
  const RunConfig& config() const { return config_; }
  const std::string& system_message() const { return system_message_; }
  Backend& backend() { return *backend_; }
  CacheStore& cache() { return *cache_; }
  const std::shared_ptr<ContextRegistry>& registry() const { return registry_; }
  Pool& pool() { return *pool_; }
  std::size_t backend_calls() const { return gateway_->backend_calls(); }

  std::string describe(const ContextSnapshot& snap) const;

  /// Re-embeds the pool (reusing stored vectors) and persists the side-table.
  EmbedResult refresh_embeddings();

  void add_example(Example e);
  void remove_example(const std::string& id);

  Selection select(const ContextSnapshot& snap, double k);

  /// Similarity of `snap` to every embedded example, in pool order.
  std::vector<ScoredExample> similarity(const ContextSnapshot& snap);

  /// Full single-context flow. Backend and embedder failures are captured in
  /// the outcome and degrade to the fallback vector.
  ContextOutcome process(const ContextSnapshot& snap, double k);

  /// Deduplicates contexts, processes each once with up to
  /// `config.max_in_flight` workers, then fans out one row per window.
  BatchResult run_batch(std::span<const WindowRecord> windows, double k);

 private:
  std::vector<EmbeddedExample> embedded_snapshot() const;

  RunConfig config_;
  ContextSchema schema_;
  PhraseTable phrases_;
  SystemMessageTemplate template_;
  std::string system_message_;
  std::unique_ptr<Pool> pool_;
  std::unique_ptr<Embedder> embedder_;
  std::unique_ptr<EmbeddingStore> embeddings_;
  std::shared_ptr<ContextRegistry> registry_;
  std::unique_ptr<Backend> backend_;
  std::unique_ptr<CacheStore> cache_;
  std::unique_ptr<CachedGateway> gateway_;

  mutable std::shared_mutex embedded_mutex_;
  std::vector<EmbeddedExample> embedded_;
};

/// Context from a request body {context: {...}, z?, user?}; z defaults to the
/// schema window. Throws ValidationError if the snapshot is invalid.
ContextSnapshot snapshot_from_request(const nlohmann::json& body, const ContextSchema& schema);

}  // namespace contextgpt
