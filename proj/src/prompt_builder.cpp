#include "contextgpt/prompt_builder.hpp"

#include "contextgpt/error.hpp"
#include "contextgpt/io.hpp"

namespace contextgpt {

namespace {

constexpr std::string_view kActivitiesSlot = "{activities}";
constexpr std::string_view kFormatSlot = "{output_format}";

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

}  // namespace

void SystemMessageTemplate::validate() const {
  if (preamble.find(kActivitiesSlot) == std::string::npos)
    throw ValidationError("system message template lacks the {activities} slot");
  if (steps.size() < 3) throw ValidationError("system message template needs at least 3 steps");
  auto open = output_format.find('[');
  if (open == std::string::npos || output_format.find(']', open) == std::string::npos)
    throw ValidationError("output format must contain a square-bracket list");
  if (steps.back().find(kFormatSlot) == std::string::npos)
    throw ValidationError("last step must reference {output_format}");
}

SystemMessageTemplate load_template(const nlohmann::json& doc) {
  SystemMessageTemplate t;
  try {
    t.preamble = doc.at("preamble").get<std::string>();
    t.steps = doc.at("steps").get<std::vector<std::string>>();
    t.output_format = doc.at("output_format").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("template: ") + e.what());
  }
  t.validate();
  return t;
}

SystemMessageTemplate load_template_file(const std::filesystem::path& path) {
  return load_template(io::read_json(path));
}

std::string build_system_message(const SystemMessageTemplate& tmpl, const ActivitySet& acts) {
  tmpl.validate();
  std::string list;
  for (std::size_t i = 0; i < acts.size(); ++i) {
    if (i > 0) list += ", ";
    list += acts[i];
  }
  std::string out = tmpl.preamble;
  replace_all(out, kActivitiesSlot, list);
  out += "\n\nTo complete the task, follow these steps:";
  for (std::size_t i = 0; i < tmpl.steps.size(); ++i) {
    std::string step = tmpl.steps[i];
    replace_all(step, kFormatSlot, tmpl.output_format);
    out += "\n" + std::to_string(i + 1) + ". " + step;
  }
  return out;
}

std::string_view role_name(Role r) {
  switch (r) {
    case Role::system:
      return "system";
    case Role::user:
      return "user";
    case Role::assistant:
      return "assistant";
  }
  return "user";
}

nlohmann::json Prompt::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& m : messages) out.push_back({{"role", role_name(m.role)}, {"content", m.text}});
  return out;
}

std::string bracket_list(std::span<const std::string> names) {
  std::string out = "[";
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i > 0) out += ", ";
    out += names[i];
  }
  out += "]";
  return out;
}

std::string assistant_answer(const RenderedExample& ex) {
  std::string out;
  if (!ex.note.empty()) out += "Reasoning: " + ex.note + "\n";
  out += "Consistent activities: " + bracket_list(ex.consistent);
  return out;
}

Prompt assemble(const std::string& system, std::span<const RenderedExample> examples,
                const std::string& context_text) {
  Prompt p;
  p.messages.reserve(2 + 2 * examples.size());
  p.messages.push_back({Role::system, system});
  for (const auto& ex : examples) {
    p.messages.push_back({Role::user, ex.context_text});
    p.messages.push_back({Role::assistant, assistant_answer(ex)});
  }
  p.messages.push_back({Role::user, context_text});
  return p;
}

std::size_t estimate_length(const Prompt& prompt) {
  std::size_t chars = 0;
  for (const auto& m : prompt.messages) chars += m.text.size();
  return (chars + 3) / 4;
}

}  // namespace contextgpt
