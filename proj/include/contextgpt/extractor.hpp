#pragma once

// Turns raw LLM answers into consistency vectors.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "contextgpt/context_core.hpp"
#include "contextgpt/error.hpp"

namespace contextgpt {

enum class BracketSelection { last, first };
enum class UnknownNames { ignore_warn, fail };
enum class Fallback { all_consistent, all_inconsistent, fail };

struct ExtractionPolicy {
  BracketSelection bracket = BracketSelection::last;
  UnknownNames unknown = UnknownNames::ignore_warn;
  Fallback fallback = Fallback::all_consistent;
};

/// Raised only under the `fail` policies.
class ExtractionError : public Error {
 public:
  using Error::Error;
};

struct Extraction {
  ConsistencyVector vector;
  std::vector<std::string> unknown_names;
  std::vector<std::string> diagnostics;
  bool fallback = false;
  bool missing_list = false;
  bool empty_list = false;
};

Extraction extract(std::string_view raw, const ActivitySet& acts, const ExtractionPolicy& policy = {});

/// The vector used when no usable list can be extracted. Under Fallback::fail
/// (where extract would throw) this is the all-ones vector.
ConsistencyVector fallback_vector(const ActivitySet& acts, const ExtractionPolicy& policy);

struct BatchSummary {
  std::size_t total = 0;
  std::size_t fallbacks = 0;
  std::size_t missing_lists = 0;
  std::size_t empty_lists = 0;
  std::size_t failures = 0;
  std::map<std::string, std::size_t> unknown_names;

  nlohmann::json to_json() const;
};

struct BatchExtraction {
  std::vector<Extraction> results;
  BatchSummary summary;
};

/// Extracts every response (OpenMP over responses). Never throws for a single
/// malformed response: `fail` policy errors are recorded as failures and
/// replaced by the fallback vector.
BatchExtraction extract_batch(std::span<const std::string> responses, const ActivitySet& acts,
                              const ExtractionPolicy& policy = {});

/// One row of a vectors file.
struct VectorRecord {
  std::string window_id;
  std::string canonical_key;
  double k = 0.0;
  ConsistencyVector vector;
  std::vector<std::string> activities;
  bool cache_hit = false;
  bool fallback = false;
  std::vector<std::string> diagnostics;

  nlohmann::json to_json() const;
  static VectorRecord from_json(const nlohmann::json& j);
};

std::vector<VectorRecord> read_vector_file(const std::filesystem::path& path);
std::string format_vector_file(std::span<const VectorRecord> rows);

}  // namespace contextgpt
