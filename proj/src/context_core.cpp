#include "contextgpt/context_core.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "contextgpt/error.hpp"

namespace contextgpt {

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return std::string(s);
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

// ---------------------------------------------------------------------------

ActivitySet::ActivitySet(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw ValidationError("activity set is empty");
  for (std::size_t i = 0; i < names_.size(); ++i) {
    names_[i] = trim(names_[i]);
    if (names_[i].empty()) throw ValidationError("activity name is empty");
    auto [it, inserted] = index_.emplace(to_lower(names_[i]), i);
    if (!inserted) throw ValidationError("duplicate activity name: " + names_[i]);
  }
}

std::optional<std::size_t> ActivitySet::find(std::string_view name) const {
  auto it = index_.find(to_lower(trim(name)));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool ContextVariable::allows(std::string_view value) const {
  return std::find(values.begin(), values.end(), value) != values.end();
}

// ---------------------------------------------------------------------------

ContextSchema::ContextSchema(ActivitySet activities, std::vector<ContextVariable> variables,
                             double window_seconds)
    : activities_(std::move(activities)),
      variables_(std::move(variables)),
      window_seconds_(window_seconds) {
  if (!(window_seconds_ > 0)) throw ValidationError("window_seconds must be positive");
  std::set<std::string> seen;
  for (auto& var : variables_) {
    if (var.name.empty()) throw ValidationError("context variable with empty name");
    if (!seen.insert(var.name).second) throw ValidationError("duplicate context variable: " + var.name);
    if (var.kind == VariableKind::boolean) {
      if (var.values.empty()) var.values = {"false", "true"};
      if (var.values.size() != 2) throw ValidationError("boolean variable " + var.name + " must have two values");
    }
    if (var.values.size() < 2)
      throw ValidationError("categorical variable " + var.name + " needs at least two values");
    if (var.allows(kUnknown))
      throw ValidationError("variable " + var.name + " lists the reserved value 'unknown'");
    std::set<std::string> vals(var.values.begin(), var.values.end());
    if (vals.size() != var.values.size()) throw ValidationError("duplicate value in variable " + var.name);
  }
}

ContextSchema ContextSchema::from_json(const nlohmann::json& doc) {
  try {
    std::vector<std::string> acts = doc.at("activities").get<std::vector<std::string>>();
    std::vector<ContextVariable> vars;
    for (const auto& v : doc.at("variables")) {
      ContextVariable var;
      var.name = v.at("name").get<std::string>();
      std::string kind = v.value("kind", "categorical");
      if (kind == "categorical") {
        var.kind = VariableKind::categorical;
      } else if (kind == "boolean") {
        var.kind = VariableKind::boolean;
      } else {
        throw ValidationError("variable " + var.name + " has unknown kind '" + kind + "'");
      }
      if (v.contains("values")) var.values = v.at("values").get<std::vector<std::string>>();
      vars.push_back(std::move(var));
    }
    return ContextSchema(ActivitySet(std::move(acts)), std::move(vars),
                         doc.at("window_seconds").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("schema: ") + e.what());
  }
}

ContextSchema ContextSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open schema file " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

nlohmann::json ContextSchema::to_json() const {
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : variables_) {
    vars.push_back({{"name", v.name},
                    {"kind", v.kind == VariableKind::boolean ? "boolean" : "categorical"},
                    {"values", v.values}});
  }
  return {{"activities", activities_.names()}, {"variables", vars}, {"window_seconds", window_seconds_}};
}

const ContextVariable* ContextSchema::find(std::string_view name) const {
  for (const auto& v : variables_)
    if (v.name == name) return &v;
  return nullptr;
}

// ---------------------------------------------------------------------------

bool ContextSnapshot::is_known(const std::string& variable) const {
  auto it = assignments.find(variable);
  return it != assignments.end() && it->second != kUnknown;
}

std::map<std::string, std::string> assignments_from_json(const nlohmann::json& ctx) {
  if (!ctx.is_object()) throw ParseError("context must be a JSON object");
  std::map<std::string, std::string> out;
  for (const auto& [name, value] : ctx.items()) {
    if (value.is_null()) {
      out[name] = std::string(kUnknown);
    } else if (value.is_boolean()) {
      out[name] = value.get<bool>() ? "true" : "false";
    } else if (value.is_string()) {
      out[name] = value.get<std::string>();
    } else if (value.is_number()) {
      out[name] = format_number(value.get<double>());
    } else {
      throw ParseError("context value for " + name + " must be a string, boolean or null");
    }
  }
  return out;
}

nlohmann::json assignments_to_json(const std::map<std::string, std::string>& a) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [k, v] : a) out[k] = v;
  return out;
}

std::string ValidationReport::summary() const {
  std::string out;
  for (const auto& v : violations) {
    if (!out.empty()) out += "; ";
    out += v.message;
  }
  return out;
}

ValidationReport validate_snapshot(const ContextSchema& schema, const ContextSnapshot& snap) {
  ValidationReport report;
  if (!(snap.window_seconds > 0)) {
    report.violations.push_back({Violation::Kind::bad_window, "", format_number(snap.window_seconds),
                                 "window seconds must be positive"});
  }
  for (const auto& [name, value] : snap.assignments) {
    const ContextVariable* var = schema.find(name);
    if (var == nullptr) {
      report.violations.push_back({Violation::Kind::unknown_variable, name, value,
                                   "unknown variable '" + name + "'"});
    } else if (value != kUnknown && !var->allows(value)) {
      report.violations.push_back({Violation::Kind::value_not_allowed, name, value,
                                   "value not allowed: '" + value + "' for '" + name + "'"});
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Canonical key: "name=value;name=value|z=4" with '%', '=', ';', '|' escaped.

namespace {

void append_escaped(std::string& out, std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  for (char c : s) {
    if (c == '%' || c == '=' || c == ';' || c == '|') {
      out += '%';
      out += kHex[(static_cast<unsigned char>(c) >> 4) & 0xF];
      out += kHex[static_cast<unsigned char>(c) & 0xF];
    } else {
      out += c;
    }
  }
}

std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%') {
      if (i + 2 >= s.size()) throw ParseError("truncated escape in key");
      unsigned v = 0;
      auto [p, ec] = std::from_chars(s.data() + i + 1, s.data() + i + 3, v, 16);
      if (ec != std::errc() || p != s.data() + i + 3) throw ParseError("bad escape in key");
      out += static_cast<char>(v);
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

}  // namespace

std::string canonical_key(const ContextSchema& schema, const ContextSnapshot& snap) {
  auto report = validate_snapshot(schema, snap);
  if (!report.ok()) throw ValidationError("invalid snapshot: " + report.summary());
  std::string key;
  bool first = true;
  for (const auto& [name, value] : snap.assignments) {
    if (value == kUnknown) continue;
    if (!first) key += ';';
    first = false;
    append_escaped(key, name);
    key += '=';
    append_escaped(key, value);
  }
  key += "|z=";
  key += format_number(snap.window_seconds);
  return key;
}

ContextSnapshot parse_canonical_key(std::string_view key) {
  auto bar = key.rfind("|z=");
  if (bar == std::string_view::npos) throw ParseError("canonical key lacks window part: " + std::string(key));
  ContextSnapshot snap;
  std::string_view z = key.substr(bar + 3);
  auto [p, ec] = std::from_chars(z.data(), z.data() + z.size(), snap.window_seconds);
  if (ec != std::errc() || p != z.data() + z.size()) throw ParseError("bad window in canonical key");
  std::string_view body = key.substr(0, bar);
  while (!body.empty()) {
    auto semi = body.find(';');
    std::string_view pair = body.substr(0, semi);
    auto eq = pair.find('=');
    if (eq == std::string_view::npos) throw ParseError("bad assignment in canonical key");
    snap.assignments[unescape(pair.substr(0, eq))] = unescape(pair.substr(eq + 1));
    if (semi == std::string_view::npos) break;
    body.remove_prefix(semi + 1);
  }
  return snap;
}

// ---------------------------------------------------------------------------

std::size_t context_space_size(const ContextSchema& schema) {
  std::size_t n = 1;
  for (const auto& v : schema.variables()) n *= v.values.size();
  return n;
}

ContextSnapshot context_at(const ContextSchema& schema, std::size_t index) {
  if (index >= context_space_size(schema)) throw ValidationError("context index out of range");
  ContextSnapshot snap;
  snap.window_seconds = schema.window_seconds();
  const auto& vars = schema.variables();
  for (auto it = vars.rbegin(); it != vars.rend(); ++it) {
    snap.assignments[it->name] = it->values[index % it->values.size()];
    index /= it->values.size();
  }
  return snap;
}

std::vector<ContextSnapshot> sample_contexts(const ContextSchema& schema, std::size_t count, std::uint64_t seed) {
  const std::size_t space = context_space_size(schema);
  if (count > space)
    throw ValidationError("requested " + std::to_string(count) + " contexts but the schema admits only " +
                          std::to_string(space));
  std::vector<std::size_t> idx(space);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates; explicit so the sample does not depend on the
  // standard library's shuffle.
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng() % (space - i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<ContextSnapshot> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(context_at(schema, idx[i]));
  return out;
}

// ---------------------------------------------------------------------------

ConsistencyVector::ConsistencyVector(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto b : bits_)
    if (b > 1) throw ValidationError("consistency vector entries must be 0 or 1");
}

std::size_t ConsistencyVector::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

NameMatch vector_from_names(const ActivitySet& acts, std::span<const std::string> names) {
  NameMatch m{ConsistencyVector::zeros(acts.size()), {}};
  for (const auto& n : names) {
    if (auto i = acts.find(n)) {
      m.vector.set(*i);
    } else {
      m.unmatched.push_back(trim(n));
    }
  }
  return m;
}

std::vector<std::string> names_from_vector(const ActivitySet& acts, const ConsistencyVector& v) {
  if (v.size() != acts.size()) {
    throw ValidationError("vector length " + std::to_string(v.size()) + " does not match " +
                          std::to_string(acts.size()) + " activities");
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v.test(i)) out.push_back(acts[i]);
  return out;
}

}  // namespace contextgpt
