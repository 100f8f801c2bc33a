#include <doctest.h>

#include <random>

#include "contextgpt/extractor.hpp"
#include "contextgpt/prompt_builder.hpp"
#include "support.hpp"

using namespace contextgpt;
using testsupport::TempDir;

namespace {

const ActivitySet kActs({"Walking", "Running", "Sitting", "Moving by Car"});

}  // namespace

TEST_CASE("the last bracketed group wins by default") {
  auto x = extract("Maybe [Walking] at first.\nConsistent activities: [Running, Sitting]", kActs);
  CHECK(x.vector == ConsistencyVector({0, 1, 1, 0}));
  CHECK_FALSE(x.fallback);
  ExtractionPolicy first;
  first.bracket = BracketSelection::first;
  CHECK(extract("[Walking] then [Running]", kActs, first).vector == ConsistencyVector({1, 0, 0, 0}));
}

TEST_CASE("names are matched loosely") {
  auto x = extract("Consistent activities: [ walking , \"MOVING BY CAR\", `Sitting`, **Running**]", kActs);
  CHECK(x.vector == ConsistencyVector::ones(4));
}

TEST_CASE("unknown names are ignored with a warning, or fail") {
  auto x = extract("[Walking, Flying]", kActs);
  CHECK(x.vector == ConsistencyVector({1, 0, 0, 0}));
  CHECK(x.unknown_names == std::vector<std::string>{"Flying"});
  CHECK(x.diagnostics.size() == 1);
  ExtractionPolicy strict;
  strict.unknown = UnknownNames::fail;
  CHECK_THROWS_AS(extract("[Walking, Flying]", kActs, strict), ExtractionError);
}

TEST_CASE("missing and empty lists fall back per policy") {
  auto missing = extract("I cannot tell.", kActs);
  CHECK(missing.fallback);
  CHECK(missing.missing_list);
  CHECK(missing.vector == ConsistencyVector::ones(4));

  auto empty = extract("Consistent activities: []", kActs);
  CHECK(empty.fallback);
  CHECK(empty.empty_list);
  CHECK(empty.vector == ConsistencyVector::ones(4));

  auto all_unknown = extract("[Flying, Swimming]", kActs);
  CHECK(all_unknown.fallback);
  CHECK(all_unknown.vector == ConsistencyVector::ones(4));

  ExtractionPolicy zeros;
  zeros.fallback = Fallback::all_inconsistent;
  CHECK(extract("nothing", kActs, zeros).vector == ConsistencyVector::zeros(4));
  CHECK(extract("[]", kActs, zeros).vector == ConsistencyVector::zeros(4));

  ExtractionPolicy fail;
  fail.fallback = Fallback::fail;
  CHECK_THROWS_AS(extract("nothing", kActs, fail), ExtractionError);
  CHECK(fallback_vector(kActs, fail) == ConsistencyVector::ones(4));
}

TEST_CASE("formatted assistant answers round-trip for all subsets") {
  ActivitySet acts({"A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8"});
  ExtractionPolicy policy;
  policy.fallback = Fallback::all_inconsistent;
  for (unsigned mask = 0; mask < 256; ++mask) {
    std::vector<std::string> names;
    std::vector<std::uint8_t> bits(8, 0);
    for (std::size_t i = 0; i < 8; ++i)
      if (mask & (1u << i)) {
        names.push_back(acts[i]);
        bits[i] = 1;
      }
    auto text = assistant_answer({"ctx", names, "Checked [every] constraint."});
    CHECK(extract(text, acts, policy).vector == ConsistencyVector(bits));
  }
}

TEST_CASE("batch extraction matches one-by-one extraction and never throws") {
  std::vector<std::string> responses;
  std::mt19937 rng(3);
  const char* pieces[] = {"Walking", "Running", "Sitting", "Moving by Car", "Flying"};
  for (int i = 0; i < 500; ++i) {
    std::string r = "Reasoning...\nConsistent activities: [";
    int n = static_cast<int>(rng() % 4);
    for (int j = 0; j < n; ++j) r += std::string(j ? ", " : "") + pieces[rng() % 5];
    r += i % 7 == 0 ? "" : "]";
    responses.push_back(r);
  }
  ExtractionPolicy strict;
  strict.unknown = UnknownNames::fail;
  strict.fallback = Fallback::fail;
  auto batch = extract_batch(responses, kActs, strict);
  REQUIRE(batch.results.size() == responses.size());
  CHECK(batch.summary.total == responses.size());
  std::size_t failures = 0;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    ConsistencyVector expected;
    try {
      expected = extract(responses[i], kActs, strict).vector;
    } catch (const ExtractionError&) {
      ++failures;
      expected = ConsistencyVector::ones(4);
    }
    CHECK(batch.results[i].vector == expected);
  }
  CHECK(batch.summary.failures == failures);
  CHECK(failures > 0);

  auto lenient = extract_batch(responses, kActs);
  CHECK(lenient.summary.failures == 0);
  CHECK(lenient.summary.unknown_names.count("Flying") == 1);
  CHECK(lenient.summary.missing_lists > 0);
}

TEST_CASE("vector files round-trip") {
  TempDir dir;
  VectorRecord r;
  r.window_id = "w1";
  r.canonical_key = "speed=low|z=4";
  r.k = 0.25;
  r.vector = ConsistencyVector({1, 0, 1, 0});
  r.activities = {"Walking", "Sitting"};
  r.diagnostics = {"note"};
  std::vector<VectorRecord> rows{r, r};
  rows[1].window_id = "w2";
  rows[1].cache_hit = true;
  io::write_file_atomic(dir / "v.jsonl", format_vector_file(rows));
  auto back = read_vector_file(dir / "v.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].to_json() == rows[0].to_json());
  CHECK(back[1].to_json() == rows[1].to_json());
  CHECK(back[1].cache_hit);
  auto j = r.to_json();
  for (const char* key : {"window_id", "canonical_key", "k", "vector", "activities"}) CHECK(j.contains(key));
}
