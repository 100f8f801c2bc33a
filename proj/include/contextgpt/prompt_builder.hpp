#pragma once

// System message construction and few-shot prompt assembly.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contextgpt/context_core.hpp"

namespace contextgpt {

struct SystemMessageTemplate {
  /// Task description; {activities} expands to the activity list.
  std::string preamble;
  /// Chain-of-thought steps, in order. The last one states the output format
  /// through the {output_format} slot.
  std::vector<std::string> steps;
  /// Shape of the final answer, containing a square-bracket list.
  std::string output_format;

  /// Throws ValidationError if the template breaks its invariants.
  void validate() const;
};

SystemMessageTemplate load_template(const nlohmann::json& doc);
SystemMessageTemplate load_template_file(const std::filesystem::path& path);

std::string build_system_message(const SystemMessageTemplate& tmpl, const ActivitySet& acts);

enum class Role { system, user, assistant };
std::string_view role_name(Role r);

struct Message {
  Role role;
  std::string text;
  friend bool operator==(const Message&, const Message&) = default;
};

struct Prompt {
  std::vector<Message> messages;

  /// [{role, content}] as sent to chat-completion endpoints.
  nlohmann::json to_json() const;
};

/// An example as it appears in a prompt.
struct RenderedExample {
  std::string context_text;
  std::vector<std::string> consistent;
  std::string note;
};

/// "[A, B, C]"
std::string bracket_list(std::span<const std::string> names);

/// The assistant turn for an example: optional reasoning line, then the
/// bracketed activity list last.
std::string assistant_answer(const RenderedExample& ex);

Prompt assemble(const std::string& system, std::span<const RenderedExample> examples, const std::string& context_text);

/// ceil(total characters / 4).
std::size_t estimate_length(const Prompt& prompt);

/// Default budget for estimate_length warnings. The 21-example DOMINO prompt
/// shipped in data/domino peaks near 2.1k units.
inline constexpr std::size_t kDefaultLengthBudget = 4096;

}  // namespace contextgpt
