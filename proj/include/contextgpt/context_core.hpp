#pragma once

// Shared domain types: activities, context vocabulary, context windows and
// consistency vectors.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace contextgpt {

/// Value marking a context variable whose state is not known for a window.
inline constexpr std::string_view kUnknown = "unknown";

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Shortest round-trip decimal form ("4", "0.25").
std::string format_number(double v);

/// Ordered, case-insensitively distinct list of activity names. The order
/// defines the alignment of every consistency vector.
class ActivitySet {
 public:
  explicit ActivitySet(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& operator[](std::size_t i) const { return names_[i]; }

  /// Position of `name`, matched case-insensitively after trimming.
  std::optional<std::size_t> find(std::string_view name) const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class VariableKind { categorical, boolean };

struct ContextVariable {
  std::string name;
  VariableKind kind = VariableKind::categorical;
  std::vector<std::string> values;

  bool allows(std::string_view value) const;
};

class ContextSchema {
 public:
  ContextSchema(ActivitySet activities, std::vector<ContextVariable> variables,
                double window_seconds);

  /// Reads {activities: [..], variables: [{name, kind, values}], window_seconds}.
  static ContextSchema from_json(const nlohmann::json& doc);
  static ContextSchema load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const ActivitySet& activities() const { return activities_; }
  const std::vector<ContextVariable>& variables() const { return variables_; }
  const ContextVariable* find(std::string_view name) const;
  double window_seconds() const { return window_seconds_; }

 private:
  ActivitySet activities_;
  std::vector<ContextVariable> variables_;
  double window_seconds_;
};

/// One window's context assignment. Variables that are absent are unknown.
struct ContextSnapshot {
  std::string user;
  double window_seconds = 0.0;
  std::map<std::string, std::string> assignments;

  bool is_known(const std::string& variable) const;
};

/// Converts a JSON object {variable: value} to assignments. Booleans become
/// "true"/"false", null becomes unknown.
std::map<std::string, std::string> assignments_from_json(const nlohmann::json& ctx);
nlohmann::json assignments_to_json(const std::map<std::string, std::string>& a);

struct Violation {
  enum class Kind { unknown_variable, value_not_allowed, bad_window };
  Kind kind;
  std::string variable;
  std::string value;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string summary() const;
};

ValidationReport validate_snapshot(const ContextSchema& schema, const ContextSnapshot& snap);

/// Deterministic cache key over (known assignments, window length). The user
/// is not part of the key. Throws ValidationError for invalid snapshots.
std::string canonical_key(const ContextSchema& schema, const ContextSnapshot& snap);

/// Inverse of canonical_key; the returned snapshot has an empty user.
ContextSnapshot parse_canonical_key(std::string_view key);

/// Number of fully-known assignments the schema admits.
std::size_t context_space_size(const ContextSchema& schema);

/// The `index`-th fully-known assignment in mixed-radix order (first schema
/// variable varies slowest). Window length is the schema default.
ContextSnapshot context_at(const ContextSchema& schema, std::size_t index);

/// `count` distinct fully-known contexts drawn reproducibly from `seed`.
std::vector<ContextSnapshot> sample_contexts(const ContextSchema& schema, std::size_t count, std::uint64_t seed);

class ConsistencyVector {
 public:
  ConsistencyVector() = default;
  explicit ConsistencyVector(std::vector<std::uint8_t> bits);

  static ConsistencyVector zeros(std::size_t n) { return ConsistencyVector(std::vector<std::uint8_t>(n, 0)); }
  static ConsistencyVector ones(std::size_t n) { return ConsistencyVector(std::vector<std::uint8_t>(n, 1)); }

  std::size_t size() const { return bits_.size(); }
  std::span<const std::uint8_t> bits() const { return bits_; }
  bool test(std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i) { bits_[i] = 1; }
  std::size_t count() const;

  nlohmann::json to_json() const { return bits_; }

  friend bool operator==(const ConsistencyVector&, const ConsistencyVector&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

struct NameMatch {
  ConsistencyVector vector;
  std::vector<std::string> unmatched;
};

NameMatch vector_from_names(const ActivitySet& acts, std::span<const std::string> names);

/// Activity names with a set bit, in set order. Throws on length mismatch.
std::vector<std::string> names_from_vector(const ActivitySet& acts, const ConsistencyVector& v);

}  // namespace contextgpt
