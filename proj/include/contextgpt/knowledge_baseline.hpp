#pragma once

// Declarative exclusion rules standing in for an activity/context ontology,
// and the inclusion metrics comparing LLM answers against them.

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contextgpt/context_core.hpp"
#include "contextgpt/extractor.hpp"

namespace contextgpt {

enum class PredicateOp { equals, not_equals, in_set };

struct Predicate {
  std::string variable;
  PredicateOp op = PredicateOp::equals;
  std::vector<std::string> values;

  /// False whenever the variable is unknown, whatever the operator.
  bool matches(const ContextSnapshot& snap) const;
};

struct Rule {
  std::vector<Predicate> when;
  std::vector<std::string> exclude;

  bool matches(const ContextSnapshot& snap) const;
};

/// Every activity is consistent unless a matching rule excludes it.
class RuleSet {
 public:
  /// Checks that predicates and exclusions reference the schema.
  RuleSet(const ContextSchema& schema, std::vector<Rule> rules);

  /// Reads {rules: [{when: [{var, op, value}], exclude: [names]}]}; `op` is
  /// one of "equals", "not_equals", "in" (value is then an array).
  static RuleSet from_json(const nlohmann::json& doc, const ContextSchema& schema);
  static RuleSet load(const std::filesystem::path& path, const ContextSchema& schema);

  const std::vector<Rule>& rules() const { return rules_; }
  const ActivitySet& activities() const { return activities_; }

  ConsistencyVector evaluate_vector(const ContextSnapshot& snap) const;
  /// Consistent activity names in activity-set order.
  std::vector<std::string> evaluate(const ContextSnapshot& snap) const;

 private:
  ActivitySet activities_;
  std::vector<Rule> rules_;
  std::vector<std::vector<std::size_t>> exclude_idx_;
};

/// |L ∩ O| / |L|; nullopt when L is empty.
std::optional<double> l2o(const std::set<std::string>& llm, const std::set<std::string>& rules);
/// |L ∩ O| / |O|; nullopt when O is empty.
std::optional<double> o2l(const std::set<std::string>& llm, const std::set<std::string>& rules);

struct InclusionRow {
  std::string canonical_key;
  double k = 0.0;
  std::set<std::string> llm;
  std::set<std::string> rules;
  std::optional<double> l2o;
  std::optional<double> o2l;
};

struct InclusionAggregate {
  double k = 0.0;
  std::size_t contexts = 0;
  std::optional<double> mean_l2o;
  std::optional<double> mean_o2l;
  std::size_t undefined_l2o = 0;
  std::size_t undefined_o2l = 0;
};

struct InclusionReport {
  std::vector<InclusionRow> rows;
  std::vector<InclusionAggregate> by_k;

  /// canonical_key,k,l2o,o2l; undefined metrics are empty cells.
  std::string to_csv() const;
  nlohmann::json aggregate_json() const;
};

/// Per unique (canonical key, k) metrics, rows ordered by k then first
/// appearance. Throws ValidationError if a record does not fit the schema.
InclusionReport compare_records(std::span<const VectorRecord> records, const RuleSet& rules,
                                const ContextSchema& schema);

InclusionReport compare_over_dataset(std::span<const std::filesystem::path> vector_files, const RuleSet& rules,
                                     const ContextSchema& schema);

}  // namespace contextgpt
