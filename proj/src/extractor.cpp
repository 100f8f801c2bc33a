#include "contextgpt/extractor.hpp"

#include <regex>

#include "contextgpt/io.hpp"

namespace contextgpt {

namespace {

// Innermost bracket groups.
const std::regex& bracket_regex() {
  static const std::regex re(R"(\[([^\[\]]*)\])");
  return re;
}

std::string strip_decoration(std::string s) {
  s = trim(s);
  auto is_deco = [](char c) { return c == '"' || c == '\'' || c == '`' || c == '*'; };
  while (!s.empty() && is_deco(s.front())) s.erase(s.begin());
  while (!s.empty() && is_deco(s.back())) s.pop_back();
  return trim(s);
}

std::vector<std::string> split_list(const std::string& body) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= body.size()) {
    auto comma = body.find(',', start);
    auto item = strip_decoration(body.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

Extraction apply_fallback(Extraction ex, const ActivitySet& acts, const ExtractionPolicy& policy,
                          const std::string& reason) {
  if (policy.fallback == Fallback::fail) throw ExtractionError(reason);
  ex.vector = fallback_vector(acts, policy);
  ex.fallback = true;
  ex.diagnostics.push_back(reason);
  return ex;
}

}  // namespace

ConsistencyVector fallback_vector(const ActivitySet& acts, const ExtractionPolicy& policy) {
  return policy.fallback == Fallback::all_inconsistent ? ConsistencyVector::zeros(acts.size())
                                                       : ConsistencyVector::ones(acts.size());
}

Extraction extract(std::string_view raw, const ActivitySet& acts, const ExtractionPolicy& policy) {
  Extraction ex;
  ex.vector = ConsistencyVector::zeros(acts.size());

  const std::string text(raw);
  std::string body;
  bool found = false;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), bracket_regex()); it != std::sregex_iterator();
       ++it) {
    body = (*it)[1].str();
    found = true;
    if (policy.bracket == BracketSelection::first) break;
  }
  if (!found) {
    ex.missing_list = true;
    return apply_fallback(std::move(ex), acts, policy, "missing list");
  }

  auto names = split_list(body);
  auto match = vector_from_names(acts, names);
  ex.unknown_names = match.unmatched;
  for (const auto& u : match.unmatched) {
    if (policy.unknown == UnknownNames::fail) throw ExtractionError(u + " unmatched");
    ex.diagnostics.push_back(u + " unmatched");
  }
  if (match.vector.count() == 0) {
    ex.empty_list = true;
    return apply_fallback(std::move(ex), acts, policy, "empty list");
  }
  ex.vector = std::move(match.vector);
  return ex;
}

nlohmann::json BatchSummary::to_json() const {
  return {{"total", total},
          {"fallbacks", fallbacks},
          {"missing_lists", missing_lists},
          {"empty_lists", empty_lists},
          {"failures", failures},
          {"unknown_names", unknown_names}};
}

BatchExtraction extract_batch(std::span<const std::string> responses, const ActivitySet& acts,
                              const ExtractionPolicy& policy) {
  BatchExtraction out;
  out.results.resize(responses.size());
  std::vector<std::uint8_t> failed(responses.size(), 0);
  const auto n = static_cast<std::ptrdiff_t>(responses.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out.results[i] = extract(responses[i], acts, policy);
    } catch (const std::exception& e) {
      Extraction ex;
      ex.vector = fallback_vector(acts, policy);
      ex.fallback = true;
      ex.diagnostics.push_back(std::string("extraction failed: ") + e.what());
      out.results[i] = std::move(ex);
      failed[i] = 1;
    }
  }

  auto& s = out.summary;
  s.total = responses.size();
  for (std::size_t i = 0; i < out.results.size(); ++i) {
    const auto& r = out.results[i];
    s.fallbacks += r.fallback ? 1 : 0;
    s.missing_lists += r.missing_list ? 1 : 0;
    s.empty_lists += r.empty_list ? 1 : 0;
    s.failures += failed[i];
    for (const auto& u : r.unknown_names) ++s.unknown_names[u];
  }
  return out;
}

nlohmann::json VectorRecord::to_json() const {
  return {{"window_id", window_id}, {"canonical_key", canonical_key}, {"k", k},
          {"vector", vector.to_json()}, {"activities", activities}, {"cache_hit", cache_hit},
          {"fallback", fallback}, {"diagnostics", diagnostics}};
}

VectorRecord VectorRecord::from_json(const nlohmann::json& j) {
  try {
    VectorRecord r;
    r.window_id = j.at("window_id").get<std::string>();
    r.canonical_key = j.at("canonical_key").get<std::string>();
    r.k = j.at("k").get<double>();
    r.vector = ConsistencyVector(j.at("vector").get<std::vector<std::uint8_t>>());
    r.activities = j.value("activities", std::vector<std::string>{});
    r.cache_hit = j.value("cache_hit", false);
    r.fallback = j.value("fallback", false);
    r.diagnostics = j.value("diagnostics", std::vector<std::string>{});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("vector record: ") + e.what());
  }
}

std::vector<VectorRecord> read_vector_file(const std::filesystem::path& path) {
  std::vector<VectorRecord> rows;
  io::for_each_jsonl(path, [&](std::size_t lineno, const nlohmann::json& j) {
    try {
      rows.push_back(VectorRecord::from_json(j));
    } catch (const Error& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  });
  return rows;
}

std::string format_vector_file(std::span<const VectorRecord> rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.to_json().dump();
    out += '\n';
  }
  return out;
}

}  // namespace contextgpt
