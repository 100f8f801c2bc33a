#include <doctest.h>

#include <set>

#include "contextgpt/context_core.hpp"
#include "contextgpt/error.hpp"
#include "support.hpp"

using namespace contextgpt;

namespace {

ContextSchema small_schema() {
  return ContextSchema::from_json(nlohmann::json::parse(R"({
    "activities": ["Walking", "Sitting", "Cycling"],
    "window_seconds": 4,
    "variables": [
      {"name": "speed", "values": ["null", "low", "high"]},
      {"name": "place", "values": ["Home", "Museum"]},
      {"name": "route", "kind": "boolean"}
    ]})"));
}

ContextSnapshot snap(std::map<std::string, std::string> a, double z = 4, std::string user = "") {
  return ContextSnapshot{std::move(user), z, std::move(a)};
}

}  // namespace

TEST_CASE("activity set lookups ignore case and surrounding blanks") {
  ActivitySet acts({"Walking", "Moving by Car"});
  CHECK(acts.find("walking") == 0u);
  CHECK(acts.find("  MOVING BY CAR ") == 1u);
  CHECK_FALSE(acts.find("Swimming").has_value());
  CHECK_THROWS_AS(ActivitySet({"Walking", "walking"}), ValidationError);
  CHECK_THROWS_AS(ActivitySet(std::vector<std::string>{}), ValidationError);
}

TEST_CASE("schema rejects malformed variables") {
  using nlohmann::json;
  auto with_var = [](json var) {
    return json{{"activities", {"A"}}, {"window_seconds", 4}, {"variables", {var}}};
  };
  CHECK_THROWS_AS(ContextSchema::from_json(with_var({{"name", "x"}, {"values", {"a"}}})), ValidationError);
  CHECK_THROWS_AS(ContextSchema::from_json(with_var({{"name", "x"}, {"values", {"a", "a"}}})), ValidationError);
  CHECK_THROWS_AS(ContextSchema::from_json(with_var({{"name", "x"}, {"values", {"a", "unknown"}}})), ValidationError);
  CHECK_THROWS_AS(ContextSchema::from_json(with_var({{"name", "x"}, {"kind", "ordinal"}})), ValidationError);
  CHECK_THROWS_AS(ContextSchema::from_json(json{{"activities", {"A"}}}), ParseError);
  auto s = ContextSchema::from_json(with_var({{"name", "b"}, {"kind", "boolean"}}));
  CHECK(s.variables()[0].values == std::vector<std::string>{"false", "true"});
}

TEST_CASE("validation names the offending variable and value") {
  auto schema = small_schema();
  auto r = validate_snapshot(schema, snap({{"speed", "warp"}, {"colour", "red"}}));
  REQUIRE(r.violations.size() == 2);
  bool saw_value = false, saw_var = false;
  for (const auto& v : r.violations) {
    if (v.kind == Violation::Kind::value_not_allowed) {
      saw_value = true;
      CHECK(v.variable == "speed");
      CHECK(v.value == "warp");
    }
    if (v.kind == Violation::Kind::unknown_variable) {
      saw_var = true;
      CHECK(v.variable == "colour");
    }
  }
  CHECK(saw_value);
  CHECK(saw_var);
  CHECK(validate_snapshot(schema, snap({{"speed", "low"}}, 0)).violations.size() == 1);
  CHECK(validate_snapshot(schema, snap({{"speed", "unknown"}})).ok());
}

TEST_CASE("canonical key ignores user, order and unknowns") {
  auto schema = small_schema();
  auto a = snap({{"speed", "low"}, {"place", "Home"}}, 4, "alice");
  auto b = snap({{"place", "Home"}, {"speed", "low"}, {"route", "unknown"}}, 4, "bob");
  CHECK(canonical_key(schema, a) == canonical_key(schema, b));
  CHECK(canonical_key(schema, a) == "place=Home;speed=low|z=4");
  CHECK(canonical_key(schema, snap({})) == canonical_key(schema, snap({{"place", "unknown"}})));
  CHECK(canonical_key(schema, snap({{"speed", "low"}}, 4)) != canonical_key(schema, snap({{"speed", "low"}}, 8)));
  CHECK_THROWS_AS(canonical_key(schema, snap({{"speed", "warp"}})), ValidationError);
}

TEST_CASE("canonical key parses back, including escaped characters") {
  auto schema = ContextSchema::from_json(nlohmann::json::parse(R"({
    "activities": ["A"], "window_seconds": 2.5,
    "variables": [{"name": "x;y", "values": ["a=b|c", "100%"]}]})"));
  for (const auto& v : {"a=b|c", "100%"}) {
    auto s = snap({{"x;y", v}}, 2.5);
    auto back = parse_canonical_key(canonical_key(schema, s));
    CHECK(back.assignments == s.assignments);
    CHECK(back.window_seconds == 2.5);
  }
  CHECK_THROWS_AS(parse_canonical_key("speed=low"), ParseError);
  CHECK_THROWS_AS(parse_canonical_key("speed=%4|z=4"), ParseError);
}

TEST_CASE("context enumeration is mixed radix and sampling is reproducible") {
  auto schema = small_schema();
  CHECK(context_space_size(schema) == 12);
  std::set<std::string> keys;
  for (std::size_t i = 0; i < 12; ++i) keys.insert(canonical_key(schema, context_at(schema, i)));
  CHECK(keys.size() == 12);
  CHECK(context_at(schema, 0).assignments.at("speed") == "null");
  CHECK(context_at(schema, 11).assignments.at("speed") == "high");
  CHECK(context_at(schema, 1).assignments.at("route") == "true");
  CHECK_THROWS(context_at(schema, 12));

  auto a = sample_contexts(schema, 7, 42);
  auto b = sample_contexts(schema, 7, 42);
  CHECK(a.size() == 7);
  std::set<std::string> distinct;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(canonical_key(schema, a[i]) == canonical_key(schema, b[i]));
    distinct.insert(canonical_key(schema, a[i]));
  }
  CHECK(distinct.size() == 7);
  CHECK_THROWS_AS(sample_contexts(schema, 13, 0), ValidationError);
}

TEST_CASE("DOMINO context space holds enough contexts for a 412-context run") {
  auto schema = testsupport::load_schema("domino");
  CHECK(schema.activities().size() == 14);
  CHECK(context_space_size(schema) == 3 * 4 * 2 * 13 * 6 * 2);
  CHECK(sample_contexts(schema, 412, 1).size() == 412);
}

TEST_CASE("names and vectors round-trip over every subset of 8 activities") {
  ActivitySet acts({"A", "B", "C", "D", "E", "F", "G", "H"});
  for (unsigned mask = 0; mask < 256; ++mask) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < 8; ++i)
      if (mask & (1u << i)) names.push_back(acts[i]);
    auto m = vector_from_names(acts, names);
    CHECK(m.unmatched.empty());
    CHECK(m.vector.count() == names.size());
    CHECK(names_from_vector(acts, m.vector) == names);
  }
}

TEST_CASE("vector helpers report unmatched names and size mismatches") {
  ActivitySet acts({"Walking", "Sitting"});
  std::vector<std::string> names{"sitting", "Flying"};
  auto m = vector_from_names(acts, names);
  CHECK(m.vector == ConsistencyVector({0, 1}));
  CHECK(m.unmatched == std::vector<std::string>{"Flying"});
  CHECK_THROWS_AS(names_from_vector(acts, ConsistencyVector::ones(3)), ValidationError);
  CHECK_THROWS_AS(ConsistencyVector({0, 2}), ValidationError);
}

TEST_CASE("numbers format in shortest form") {
  CHECK(format_number(4) == "4");
  CHECK(format_number(0.25) == "0.25");
  CHECK(format_number(0.1) == "0.1");
}

TEST_CASE("assignments from JSON normalize booleans and nulls") {
  auto a = assignments_from_json(nlohmann::json::parse(R"({"route": true, "speed": null, "place": "Home"})"));
  CHECK(a.at("route") == "true");
  CHECK(a.at("speed") == "unknown");
  CHECK(a.at("place") == "Home");
}
