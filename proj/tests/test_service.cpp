#include <doctest.h>

#include <httplib.h>

#include "contextgpt/service.hpp"
#include "support.hpp"

using namespace contextgpt;
using nlohmann::json;
using testsupport::TempDir;

namespace {

struct Fixture {
  TempDir dir;
  Pipeline pipeline{testsupport::dataset_config("domino", dir)};
  Service service{pipeline};
  int port = service.start_background();
  httplib::Client client{"127.0.0.1", port};

  json get(const std::string& path, int expect = 200) {
    auto res = client.Get(path);
    REQUIRE(res);
    CHECK(res->status == expect);
    return json::parse(res->body);
  }
  json post(const std::string& path, const json& body, int expect = 200) {
    auto res = client.Post(path, body.dump(), "application/json");
    REQUIRE(res);
    CHECK_MESSAGE(res->status == expect, res->body);
    return json::parse(res->body);
  }
};

}  // namespace

TEST_CASE("schema and activities") {
  Fixture f;
  auto acts = f.get("/activities");
  REQUIRE(acts.size() == 14);
  CHECK(acts[0] == "Walking");
  CHECK(acts[13] == "Brushing Teeth");
  auto schema = f.get("/schema");
  CHECK(schema["variables"].size() == 6);
  CHECK(schema["window_seconds"] == 4);
}

TEST_CASE("probe returns the description and a vector of schema length") {
  Fixture f;
  auto r = f.post("/probe", {{"context", {{"speed", "high"}, {"public_transport_route", true}}}, {"k", 0.7}});
  CHECK(r["description"].get<std::string>().rfind("In the last 4 seconds the user", 0) == 0);
  CHECK(r["vector"].size() == 14);
  CHECK(r["activities"].size() > 0);
  CHECK(r["prompt"].size() == 2 + 2 * r["selected"].size());
  CHECK(r["failure"].is_null());

  auto dry = f.post("/probe", {{"context", {{"speed", "high"}}}, {"dry_run", true}});
  CHECK(dry["canonical_key"] == "speed=high|z=4");
  CHECK_FALSE(dry.contains("prompt"));
  CHECK(f.pipeline.backend_calls() == 1);

  auto bad = f.post("/probe", {{"context", {{"speed", "warp"}}}}, 400);
  CHECK(bad["error"]["code"] == "validation_error");
  auto bad_k = f.post("/probe", {{"context", json::object()}, {"k", 2}}, 400);
  CHECK(bad_k["error"]["code"] == "validation_error");
  auto res = f.client.Post("/probe", "{oops", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body)["error"]["code"] == "parse_error");
}

TEST_CASE("pool add, duplicate, list and delete") {
  Fixture f;
  json example = {{"id", "curated-1"},
                  {"context", {{"semantic_location", "Gym"}, {"speed", "medium"}}},
                  {"consistent", {"running", "Walking"}},
                  {"note", "treadmill"}};
  auto created = f.post("/pool", example, 201);
  CHECK(created["consistent"] == json({"Running", "Walking"}));
  CHECK(created["z"] == 4);
  CHECK(f.get("/pool").size() == 22);

  auto dup = f.post("/pool", example, 409);
  CHECK(dup["error"]["code"] == "duplicate_id");
  CHECK(f.get("/pool").size() == 22);

  auto invalid = example;
  invalid["id"] = "curated-2";
  invalid["consistent"] = {"Teleporting"};
  CHECK(f.post("/pool", invalid, 400)["error"]["code"] == "validation_error");

  auto scores = f.post("/similarity", {{"context", {{"semantic_location", "Gym"}, {"speed", "medium"}}}});
  CHECK(scores["scores"].size() == 22);
  bool found = false;
  for (const auto& s : scores["scores"])
    if (s["id"] == "curated-1") found = true;
  CHECK(found);

  auto del = f.client.Delete("/pool/curated-1");
  REQUIRE(del);
  CHECK(del->status == 200);
  auto again = f.client.Delete("/pool/curated-1");
  REQUIRE(again);
  CHECK(again->status == 404);
  CHECK(json::parse(again->body)["error"]["code"] == "unknown_id");
  CHECK(f.get("/pool").size() == 21);
}

TEST_CASE("batch runs a windows file and writes vectors") {
  Fixture f;
  auto contexts = sample_contexts(f.pipeline.schema(), 5, 2);
  std::vector<WindowRecord> windows;
  for (std::size_t i = 0; i < 20; ++i) {
    WindowRecord w;
    w.window_id = "w" + std::to_string(i);
    w.context = contexts[i % 5];
    windows.push_back(w);
  }
  io::write_file_atomic(f.dir / "windows.jsonl", format_windows_file(windows) + "{\"window_id\": \"w0\", \"context\": {}}\n");
  auto r = f.post("/batch", {{"windows_ref", (f.dir / "windows.jsonl").string()},
                             {"out", (f.dir / "vectors.jsonl").string()},
                             {"k", 0.5}});
  CHECK(r["summary"]["windows"] == 20);
  CHECK(r["summary"]["unique_contexts"] == 5);
  CHECK(r["summary"]["backend_calls"] == 5);
  REQUIRE(r["ingest_errors"].size() == 1);
  CHECK(r["ingest_errors"][0]["message"].get<std::string>().find("w0") != std::string::npos);
  auto rows = read_vector_file(f.dir / "vectors.jsonl");
  CHECK(rows.size() == 20);
  CHECK(rows[0].vector.size() == 14);

  CHECK(f.post("/batch", json::object(), 400)["error"]["code"] == "validation_error");
}

TEST_CASE("listening on a taken port fails loudly") {
  Fixture f;
  TempDir dir;
  Pipeline other(testsupport::dataset_config("domino", dir));
  Service second(other);
  CHECK_THROWS_AS(second.listen("127.0.0.1", f.port), Error);
}
