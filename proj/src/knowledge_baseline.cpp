#include "contextgpt/knowledge_baseline.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "contextgpt/error.hpp"
#include "contextgpt/io.hpp"

namespace contextgpt {

bool Predicate::matches(const ContextSnapshot& snap) const {
  auto it = snap.assignments.find(variable);
  if (it == snap.assignments.end() || it->second == kUnknown) return false;
  const std::string& v = it->second;
  switch (op) {
    case PredicateOp::equals:
      return v == values.front();
    case PredicateOp::not_equals:
      return v != values.front();
    case PredicateOp::in_set:
      return std::find(values.begin(), values.end(), v) != values.end();
  }
  return false;
}

bool Rule::matches(const ContextSnapshot& snap) const {
  return std::all_of(when.begin(), when.end(), [&](const Predicate& p) { return p.matches(snap); });
}

RuleSet::RuleSet(const ContextSchema& schema, std::vector<Rule> rules)
    : activities_(schema.activities()), rules_(std::move(rules)) {
  for (std::size_t r = 0; r < rules_.size(); ++r) {
    const std::string where = "rule " + std::to_string(r);
    for (const auto& p : rules_[r].when) {
      const ContextVariable* var = schema.find(p.variable);
      if (var == nullptr) throw ValidationError(where + ": unknown variable '" + p.variable + "'");
      if (p.values.empty()) throw ValidationError(where + ": predicate on '" + p.variable + "' has no value");
      if (p.op != PredicateOp::in_set && p.values.size() != 1)
        throw ValidationError(where + ": predicate on '" + p.variable + "' takes one value");
      for (const auto& v : p.values)
        if (!var->allows(v)) throw ValidationError(where + ": value '" + v + "' not allowed for '" + p.variable + "'");
    }
    std::vector<std::size_t> idx;
    for (auto& name : rules_[r].exclude) {
      auto i = activities_.find(name);
      if (!i) throw ValidationError(where + ": unknown activity '" + name + "'");
      name = activities_[*i];
      idx.push_back(*i);
    }
    exclude_idx_.push_back(std::move(idx));
  }
}

RuleSet RuleSet::from_json(const nlohmann::json& doc, const ContextSchema& schema) {
  std::vector<Rule> rules;
  try {
    for (const auto& r : doc.at("rules")) {
      Rule rule;
      for (const auto& w : r.value("when", nlohmann::json::array())) {
        Predicate p;
        p.variable = w.at("var").get<std::string>();
        std::string op = w.value("op", "equals");
        const auto& value = w.at("value");
        if (op == "equals") {
          p.op = PredicateOp::equals;
        } else if (op == "not_equals") {
          p.op = PredicateOp::not_equals;
        } else if (op == "in") {
          p.op = PredicateOp::in_set;
        } else {
          throw ValidationError("unknown rule operator '" + op + "'");
        }
        if (value.is_array()) {
          for (const auto& v : value) p.values.push_back(v.is_boolean() ? (v.get<bool>() ? "true" : "false") : v.get<std::string>());
        } else if (value.is_boolean()) {
          p.values.push_back(value.get<bool>() ? "true" : "false");
        } else {
          p.values.push_back(value.get<std::string>());
        }
        rule.when.push_back(std::move(p));
      }
      rule.exclude = r.at("exclude").get<std::vector<std::string>>();
      rules.push_back(std::move(rule));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("rules: ") + e.what());
  }
  return RuleSet(schema, std::move(rules));
}

RuleSet RuleSet::load(const std::filesystem::path& path, const ContextSchema& schema) {
  return from_json(io::read_json(path), schema);
}

ConsistencyVector RuleSet::evaluate_vector(const ContextSnapshot& snap) const {
  std::vector<std::uint8_t> bits(activities_.size(), 1);
  for (std::size_t r = 0; r < rules_.size(); ++r) {
    if (!rules_[r].matches(snap)) continue;
    for (std::size_t i : exclude_idx_[r]) bits[i] = 0;
  }
  return ConsistencyVector(std::move(bits));
}

std::vector<std::string> RuleSet::evaluate(const ContextSnapshot& snap) const {
  return names_from_vector(activities_, evaluate_vector(snap));
}

// ---------------------------------------------------------------------------

namespace {

std::size_t intersection_size(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t n = 0;
  for (const auto& x : a) n += b.count(x);
  return n;
}

}  // namespace

std::optional<double> l2o(const std::set<std::string>& llm, const std::set<std::string>& rules) {
  if (llm.empty()) return std::nullopt;
  return static_cast<double>(intersection_size(llm, rules)) / static_cast<double>(llm.size());
}

std::optional<double> o2l(const std::set<std::string>& llm, const std::set<std::string>& rules) {
  if (rules.empty()) return std::nullopt;
  return static_cast<double>(intersection_size(llm, rules)) / static_cast<double>(rules.size());
}

std::string InclusionReport::to_csv() const {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + "\"";
  };
  auto cell = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  std::string out = "canonical_key,k,l2o,o2l\n";
  for (const auto& r : rows)
    out += quote(r.canonical_key) + "," + format_number(r.k) + "," + cell(r.l2o) + "," + cell(r.o2l) + "\n";
  return out;
}

nlohmann::json InclusionReport::aggregate_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& a : by_k) {
    out.push_back({{"k", a.k},
                   {"contexts", a.contexts},
                   {"mean_l2o", a.mean_l2o ? nlohmann::json(*a.mean_l2o) : nlohmann::json()},
                   {"mean_o2l", a.mean_o2l ? nlohmann::json(*a.mean_o2l) : nlohmann::json()},
                   {"undefined_l2o", a.undefined_l2o},
                   {"undefined_o2l", a.undefined_o2l}});
  }
  return {{"by_k", out}};
}

InclusionReport compare_records(std::span<const VectorRecord> records, const RuleSet& rules,
                                const ContextSchema& schema) {
  const auto& acts = schema.activities();
  // Unique (key, k) in first-appearance order.
  std::map<std::pair<double, std::string>, std::size_t> seen;
  std::vector<const VectorRecord*> unique;
  for (const auto& r : records) {
    if (r.vector.size() != acts.size())
      throw ValidationError("schema mismatch: record " + r.window_id + " has vector length " +
                            std::to_string(r.vector.size()));
    if (seen.emplace(std::make_pair(r.k, r.canonical_key), unique.size()).second) unique.push_back(&r);
  }
  std::stable_sort(unique.begin(), unique.end(), [](const VectorRecord* a, const VectorRecord* b) { return a->k < b->k; });

  InclusionReport report;
  report.rows.resize(unique.size());
  std::vector<std::string> errors(unique.size());
  const auto n = static_cast<std::ptrdiff_t>(unique.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const VectorRecord& rec = *unique[i];
    try {
      ContextSnapshot snap = parse_canonical_key(rec.canonical_key);
      auto check = validate_snapshot(schema, snap);
      if (!check.ok()) throw ValidationError("schema mismatch: " + check.summary());
      auto llm_names = names_from_vector(acts, rec.vector);
      auto rule_names = rules.evaluate(snap);
      InclusionRow row;
      row.canonical_key = rec.canonical_key;
      row.k = rec.k;
      row.llm = std::set<std::string>(llm_names.begin(), llm_names.end());
      row.rules = std::set<std::string>(rule_names.begin(), rule_names.end());
      row.l2o = l2o(row.llm, row.rules);
      row.o2l = o2l(row.llm, row.rules);
      report.rows[i] = std::move(row);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) throw ValidationError(unique[i]->canonical_key + ": " + errors[i]);

  for (const auto& row : report.rows) {
    if (report.by_k.empty() || report.by_k.back().k != row.k) report.by_k.push_back(InclusionAggregate{row.k, 0, std::nullopt, std::nullopt, 0, 0});
    auto& agg = report.by_k.back();
    ++agg.contexts;
    if (row.l2o) {
      agg.mean_l2o = agg.mean_l2o.value_or(0.0) + *row.l2o;
    } else {
      ++agg.undefined_l2o;
    }
    if (row.o2l) {
      agg.mean_o2l = agg.mean_o2l.value_or(0.0) + *row.o2l;
    } else {
      ++agg.undefined_o2l;
    }
  }
  for (auto& agg : report.by_k) {
    if (agg.mean_l2o) *agg.mean_l2o /= static_cast<double>(agg.contexts - agg.undefined_l2o);
    if (agg.mean_o2l) *agg.mean_o2l /= static_cast<double>(agg.contexts - agg.undefined_o2l);
  }
  return report;
}

InclusionReport compare_over_dataset(std::span<const std::filesystem::path> vector_files, const RuleSet& rules,
                                     const ContextSchema& schema) {
  std::vector<VectorRecord> all;
  for (const auto& f : vector_files) {
    auto rows = read_vector_file(f);
    all.insert(all.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
  }
  return compare_records(all, rules, schema);
}

}  // namespace contextgpt
