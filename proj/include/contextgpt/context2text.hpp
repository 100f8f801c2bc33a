#pragma once

// Renders a context window as the natural-language description given to the
// LLM and to the embedder.

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "contextgpt/context_core.hpp"
#include "contextgpt/error.hpp"

namespace contextgpt {

/// A phrase table lacks a fragment for a (variable, value) pair.
class CoverageError : public ValidationError {
 public:
  CoverageError(std::string variable, std::string value);
  const std::string& variable() const { return variable_; }
  const std::string& value() const { return value_; }

 private:
  std::string variable_;
  std::string value_;
};

struct PhraseTable {
  /// Must contain the {z} and {u} slots.
  std::string preamble;
  /// Substituted for {u}. The real user id never reaches the text.
  std::string persona = "Alex";
  std::string separator = ", ";
  std::string last_separator = ", and ";
  std::string terminator = ".";
  std::map<std::string, std::map<std::string, std::string>> phrases;

  const std::string* fragment(const std::string& variable, const std::string& value) const;
};

/// Parses {preamble, persona?, terminator?, join: {separator, last_separator},
/// phrases: {variable: {value: fragment}}} and checks that every allowed value
/// of every schema variable has a fragment.
PhraseTable load_phrase_table(const nlohmann::json& doc, const ContextSchema& schema);
PhraseTable parse_phrase_table(std::string_view text, const ContextSchema& schema);
PhraseTable load_phrase_table_file(const std::filesystem::path& path, const ContextSchema& schema);

/// Preamble, then one fragment per known variable in schema order.
std::string render(const ContextSchema& schema, const PhraseTable& table, const ContextSnapshot& snap);

}  // namespace contextgpt
