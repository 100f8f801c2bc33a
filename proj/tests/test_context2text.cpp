#include <doctest.h>

#include "contextgpt/context2text.hpp"
#include "support.hpp"

using namespace contextgpt;

namespace {

ContextSchema schema() {
  return ContextSchema::from_json(nlohmann::json::parse(R"({
    "activities": ["Walking", "Sitting"], "window_seconds": 4,
    "variables": [
      {"name": "speed", "values": ["null", "low"]},
      {"name": "route", "kind": "boolean"},
      {"name": "place", "values": ["Home", "Museum"]}
    ]})"));
}

const char* kTable = R"({
  "preamble": "In the last {z} seconds the user {u}",
  "persona": "Sam",
  "phrases": {
    "speed": {"null": "has not been moving", "low": "has been moving slowly"},
    "route": {"true": "is following/close to a public transportation route",
              "false": "is not following/close to a public transportation route"},
    "place": {"Home": "is at home", "Museum": "is in a museum"}
  }})";

}  // namespace

TEST_CASE("render joins known fragments in schema order") {
  auto s = schema();
  auto table = parse_phrase_table(kTable, s);
  ContextSnapshot snap{"u17", 4, {{"place", "Museum"}, {"speed", "low"}, {"route", "true"}}};
  CHECK(render(s, table, snap) ==
        "In the last 4 seconds the user Sam has been moving slowly, is following/close to a public "
        "transportation route, and is in a museum.");
}

TEST_CASE("render omits unknown variables and never leaks the user id") {
  auto s = schema();
  auto table = parse_phrase_table(kTable, s);
  ContextSnapshot one{"user-42", 4, {{"place", "Home"}, {"speed", "unknown"}}};
  auto text = render(s, table, one);
  CHECK(text == "In the last 4 seconds the user Sam is at home.");
  CHECK(text.find("user-42") == std::string::npos);
  ContextSnapshot two{"", 4, {{"speed", "null"}, {"place", "Home"}}};
  CHECK(render(s, table, two) == "In the last 4 seconds the user Sam has not been moving, and is at home.");
  ContextSnapshot none{"", 4, {}};
  CHECK(render(s, table, none) == "In the last 4 seconds the user Sam.");
}

TEST_CASE("render substitutes the window length") {
  auto s = testsupport::load_schema("domino");
  auto table = load_phrase_table_file(testsupport::data_dir() / "domino" / "phrases.json", s);
  ContextSnapshot snap{"", 4, {{"speed", "low"}}};
  CHECK(render(s, table, snap).rfind("In the last 4 seconds the user ", 0) == 0);
  snap.window_seconds = 2.5;
  CHECK(render(s, table, snap).rfind("In the last 2.5 seconds the user ", 0) == 0);
}

TEST_CASE("phrase tables must cover every allowed value") {
  auto s = schema();
  auto doc = nlohmann::json::parse(kTable);
  doc["phrases"]["place"].erase("Museum");
  try {
    load_phrase_table(doc, s);
    FAIL("expected a coverage error");
  } catch (const CoverageError& e) {
    CHECK(e.variable() == "place");
    CHECK(e.value() == "Museum");
  }
  doc = nlohmann::json::parse(kTable);
  doc["preamble"] = "The user {u}";
  CHECK_THROWS_AS(load_phrase_table(doc, s), ValidationError);
  CHECK_THROWS_AS(parse_phrase_table("{not json", s), ParseError);
}

TEST_CASE("shipped tables describe transport routes as following/close to, for every context") {
  for (const char* name : {"domino", "extrasensory"}) {
    auto s = testsupport::load_schema(name);
    auto table = load_phrase_table_file(testsupport::data_dir() / name / "phrases.json", s);
    const auto n = context_space_size(s);
    for (std::size_t i = 0; i < n; ++i) {
      auto text = render(s, table, context_at(s, i));
      CHECK_MESSAGE(text.find("is on a public transportation") == std::string::npos, text);
      if (context_at(s, i).assignments.at("public_transport_route") == "true")
        CHECK(text.find("following/close to a public transportation route") != std::string::npos);
    }
  }
}
