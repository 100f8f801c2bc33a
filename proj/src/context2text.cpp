#include "contextgpt/context2text.hpp"

#include <fstream>
#include <sstream>
#include <vector>

namespace contextgpt {

CoverageError::CoverageError(std::string variable, std::string value)
    : ValidationError("phrase table has no fragment for (" + variable + ", " + value + ")"),
      variable_(std::move(variable)),
      value_(std::move(value)) {}

const std::string* PhraseTable::fragment(const std::string& variable, const std::string& value) const {
  auto v = phrases.find(variable);
  if (v == phrases.end()) return nullptr;
  auto f = v->second.find(value);
  return f == v->second.end() ? nullptr : &f->second;
}

PhraseTable load_phrase_table(const nlohmann::json& doc, const ContextSchema& schema) {
  if (!doc.is_object()) throw ParseError("phrase table must be a JSON object");
  PhraseTable table;
  try {
    table.preamble = doc.at("preamble").get<std::string>();
    table.persona = doc.value("persona", table.persona);
    table.terminator = doc.value("terminator", table.terminator);
    if (doc.contains("join")) {
      const auto& join = doc.at("join");
      table.separator = join.value("separator", table.separator);
      table.last_separator = join.value("last_separator", table.last_separator);
    }
    table.phrases = doc.at("phrases").get<std::map<std::string, std::map<std::string, std::string>>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("phrase table: ") + e.what());
  }
  if (table.preamble.find("{z}") == std::string::npos || table.preamble.find("{u}") == std::string::npos)
    throw ValidationError("phrase table preamble must contain {z} and {u}");
  for (const auto& var : schema.variables()) {
    for (const auto& value : var.values) {
      if (table.fragment(var.name, value) == nullptr) throw CoverageError(var.name, value);
    }
  }
  return table;
}

PhraseTable parse_phrase_table(std::string_view text, const ContextSchema& schema) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("phrase table: ") + e.what());
  }
  return load_phrase_table(doc, schema);
}

PhraseTable load_phrase_table_file(const std::filesystem::path& path, const ContextSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open phrase table " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_phrase_table(ss.str(), schema);
}

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

}  // namespace

std::string render(const ContextSchema& schema, const PhraseTable& table, const ContextSnapshot& snap) {
  std::vector<const std::string*> fragments;
  for (const auto& var : schema.variables()) {
    auto it = snap.assignments.find(var.name);
    if (it == snap.assignments.end() || it->second == kUnknown) continue;
    const std::string* f = table.fragment(var.name, it->second);
    if (f == nullptr) throw CoverageError(var.name, it->second);
    fragments.push_back(f);
  }

  std::string out = table.preamble;
  replace_all(out, "{z}", format_number(snap.window_seconds));
  replace_all(out, "{u}", table.persona);
  for (std::size_t i = 0; i < fragments.size(); ++i) {
    if (i == 0) {
      out += ' ';
    } else if (i + 1 == fragments.size()) {
      out += table.last_separator;
    } else {
      out += table.separator;
    }
    out += *fragments[i];
  }
  out += table.terminator;
  return out;
}

}  // namespace contextgpt
