// contextgpt command line: render, select, probe, batch, compare, pool, serve,
// enumerate. Machine-readable results go to stdout as JSON; warnings to stderr.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "contextgpt/io.hpp"
#include "contextgpt/pipeline.hpp"
#include "contextgpt/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace contextgpt;

namespace {

struct Common {
  std::string config;
  std::string schema, phrases, templ, pool, rules, cache, embeddings;
  std::optional<double> k;
  std::string backend;
  std::optional<std::size_t> max_inflight;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON run configuration");
  app->add_option("--schema", c.schema, "context schema JSON");
  app->add_option("--phrases", c.phrases, "phrase table JSON");
  app->add_option("--template", c.templ, "system message template JSON");
  app->add_option("--pool", c.pool, "example pool JSONL");
  app->add_option("--embeddings", c.embeddings, "embedding side-table JSONL");
  app->add_option("--rules", c.rules, "rule set JSON (mock backend, compare)");
  app->add_option("--cache", c.cache, "response cache JSONL");
  app->add_option("--k", c.k, "similarity threshold in [0, 1]");
  app->add_option("--backend", c.backend, "mock | http")->check(CLI::IsMember({"mock", "http"}));
  app->add_option("--max-inflight", c.max_inflight, "concurrent backend requests");
}

RunConfig make_config(const Common& c) {
  RunConfig cfg;
  if (!c.config.empty()) cfg = RunConfig::load(c.config);
  json over = json::object();
  auto put = [&](const char* key, const std::string& v) {
    if (!v.empty()) over[key] = v;
  };
  put("schema", c.schema);
  put("phrases", c.phrases);
  put("template", c.templ);
  put("pool", c.pool);
  put("embeddings", c.embeddings);
  put("rules", c.rules);
  put("cache", c.cache);
  put("backend", c.backend);
  if (c.k) over["k"] = *c.k;
  if (c.max_inflight) over["max_inflight"] = *c.max_inflight;
  // Command-line paths are relative to the working directory.
  cfg.merge_json(over, {});
  if (cfg.backend == BackendKind::http && !std::getenv("CONTEXTGPT_API_KEY"))
    std::cerr << "warning: CONTEXTGPT_API_KEY is not set\n";
  return cfg;
}

json parse_context_arg(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("--context: ") + e.what());
  }
}

ContextSnapshot context_from_args(const std::string& context, std::optional<double> z, const ContextSchema& schema) {
  json body = {{"context", parse_context_arg(context)}};
  if (z) body["z"] = *z;
  return snapshot_from_request(body, schema);
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

void report_ingest_errors(const IngestResult& in) {
  for (const auto& e : in.errors) std::cerr << "line " << e.line << ": " << e.message << '\n';
}

Service* g_service = nullptr;

void on_signal(int) {
  if (g_service != nullptr) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware activity consistency with LLM few-shot prompting"};
  app.require_subcommand(1);

  // render
  Common render_opts;
  std::string render_context, render_in;
  std::optional<double> render_z;
  auto* render_cmd = app.add_subcommand("render", "Describe a context (or every window in a file) in natural language");
  add_common(render_cmd, render_opts);
  render_cmd->add_option("--context", render_context, "context JSON object");
  render_cmd->add_option("--z", render_z, "window length in seconds");
  render_cmd->add_option("--in", render_in, "windows JSONL");

  // select
  Common select_opts;
  std::string select_context;
  std::optional<double> select_z;
  auto* select_cmd = app.add_subcommand("select", "Show the pool examples selected for a context");
  add_common(select_cmd, select_opts);
  select_cmd->add_option("--context", select_context, "context JSON object")->required();
  select_cmd->add_option("--z", select_z, "window length in seconds");

  // probe
  Common probe_opts;
  std::string probe_context;
  std::optional<double> probe_z;
  bool probe_dry = false;
  auto* probe_cmd = app.add_subcommand("probe", "Run one context through the whole flow and print every step");
  add_common(probe_cmd, probe_opts);
  probe_cmd->add_option("--context", probe_context, "context JSON object")->required();
  probe_cmd->add_option("--z", probe_z, "window length in seconds");
  probe_cmd->add_flag("--dry-run", probe_dry, "stop after rendering");

  // batch
  Common batch_opts;
  std::string batch_in, batch_out;
  auto* batch_cmd = app.add_subcommand("batch", "Produce consistency vectors for a windows file");
  add_common(batch_cmd, batch_opts);
  batch_cmd->add_option("--in", batch_in, "windows JSONL")->required();
  batch_cmd->add_option("--out", batch_out, "vectors JSONL")->required();

  // compare
  std::string cmp_schema, cmp_rules, cmp_out;
  std::vector<std::string> cmp_in;
  auto* compare_cmd = app.add_subcommand("compare", "Score vectors files against a rule set");
  compare_cmd->add_option("--schema", cmp_schema, "context schema JSON")->required();
  compare_cmd->add_option("--rules", cmp_rules, "rule set JSON")->required();
  compare_cmd->add_option("--in", cmp_in, "vectors JSONL (repeatable)")->required();
  compare_cmd->add_option("--out", cmp_out, "per-context CSV report");

  // pool
  Common pool_opts;
  auto* pool_cmd = app.add_subcommand("pool", "Manage the example pool");
  pool_cmd->require_subcommand(1);
  add_common(pool_cmd, pool_opts);
  auto* pool_list = pool_cmd->add_subcommand("list", "Print every example");
  std::string pool_add_json;
  auto* pool_add = pool_cmd->add_subcommand("add", "Add an example (JSON object)");
  pool_add->add_option("example", pool_add_json, "example JSON")->required();
  std::string pool_rm_id;
  auto* pool_rm = pool_cmd->add_subcommand("rm", "Remove an example by id");
  pool_rm->add_option("id", pool_rm_id)->required();
  auto* pool_embed = pool_cmd->add_subcommand("embed", "Refresh the embedding side-table");

  // serve
  Common serve_opts;
  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP API");
  add_common(serve_cmd, serve_opts);
  serve_cmd->add_option("--host", serve_host);
  serve_cmd->add_option("--port", serve_port);

  // enumerate
  std::string enum_schema, enum_out, enum_user = "u0";
  std::size_t enum_count = 0, enum_repeat = 1;
  std::uint64_t enum_seed = 0;
  auto* enum_cmd = app.add_subcommand("enumerate", "Write a windows file of distinct sampled contexts");
  enum_cmd->add_option("--schema", enum_schema, "context schema JSON")->required();
  enum_cmd->add_option("--count", enum_count, "distinct contexts")->required();
  enum_cmd->add_option("--repeat", enum_repeat, "windows per context")->check(CLI::PositiveNumber);
  enum_cmd->add_option("--seed", enum_seed);
  enum_cmd->add_option("--user", enum_user);
  enum_cmd->add_option("--out", enum_out, "windows JSONL")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (render_cmd->parsed()) {
      auto cfg = make_config(render_opts);
      auto schema = ContextSchema::load(cfg.schema);
      auto phrases = load_phrase_table_file(cfg.phrases, schema);
      if (!render_in.empty()) {
        auto in = ingest_windows(render_in, schema);
        report_ingest_errors(in);
        for (const auto& w : in.records) std::cout << render(schema, phrases, w.context) << '\n';
        return in.errors.empty() ? 0 : 1;
      }
      if (render_context.empty()) throw ValidationError("render needs --context or --in");
      std::cout << render(schema, phrases, context_from_args(render_context, render_z, schema)) << '\n';
    } else if (select_cmd->parsed()) {
      auto cfg = make_config(select_opts);
      Pipeline p(cfg);
      auto snap = context_from_args(select_context, select_z, p.schema());
      auto sel = p.select(snap, cfg.k);
      json picked = json::array();
      for (const auto& s : sel.selected) picked.push_back({{"id", s.example.id}, {"score", s.score}});
      print({{"k", cfg.k}, {"description", p.describe(snap)}, {"selected", picked}, {"diagnostics", sel.diagnostics}});
    } else if (probe_cmd->parsed()) {
      auto cfg = make_config(probe_opts);
      Pipeline p(cfg);
      auto snap = context_from_args(probe_context, probe_z, p.schema());
      if (probe_dry) {
        print({{"canonical_key", canonical_key(p.schema(), snap)}, {"description", p.describe(snap)}});
      } else {
        auto outcome = p.process(snap, cfg.k);
        print(outcome.to_json(p.schema().activities()));
        if (outcome.failure) return 1;
      }
    } else if (batch_cmd->parsed()) {
      auto cfg = make_config(batch_opts);
      Pipeline p(cfg);
      auto in = ingest_windows(batch_in, p.schema());
      report_ingest_errors(in);
      auto result = p.run_batch(in.records, cfg.k);
      io::write_file_atomic(batch_out, format_vector_file(result.rows));
      auto summary = result.summary.to_json();
      summary["ingest_errors"] = in.errors.size();
      if (result.summary.prompts_over_budget > 0)
        std::cerr << "warning: " << result.summary.prompts_over_budget << " prompts exceed the length budget of "
                  << cfg.length_budget << '\n';
      print(summary);
    } else if (compare_cmd->parsed()) {
      auto schema = ContextSchema::load(cmp_schema);
      auto rules = RuleSet::load(cmp_rules, schema);
      std::vector<fs::path> files(cmp_in.begin(), cmp_in.end());
      auto report = compare_over_dataset(files, rules, schema);
      if (!cmp_out.empty()) io::write_file_atomic(cmp_out, report.to_csv());
      auto agg = report.aggregate_json();
      agg["rows"] = report.rows.size();
      print(agg);
    } else if (pool_cmd->parsed()) {
      auto cfg = make_config(pool_opts);
      Pipeline p(cfg);
      if (pool_list->parsed()) {
        json out = json::array();
        for (const auto& e : p.pool().list()) out.push_back(example_to_json(e));
        print(out);
      } else if (pool_add->parsed()) {
        auto e = example_from_json(parse_context_arg(pool_add_json));
        std::string id = e.id;
        p.add_example(std::move(e));
        print({{"added", id}, {"size", p.pool().size()}});
      } else if (pool_rm->parsed()) {
        p.remove_example(pool_rm_id);
        print({{"removed", pool_rm_id}, {"size", p.pool().size()}});
      } else if (pool_embed->parsed()) {
        auto r = p.refresh_embeddings();
        json failures = json::array();
        for (const auto& f : r.failures) failures.push_back({{"id", f.id}, {"error", f.error}});
        print({{"embedded", r.embedded.size()}, {"computed", r.computed}, {"reused", r.reused}, {"failures", failures}});
        if (!r.failures.empty()) return 1;
      }
    } else if (serve_cmd->parsed()) {
      auto cfg = make_config(serve_opts);
      Pipeline p(cfg);
      Service service(p);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << serve_host << ":" << serve_port << '\n';
      service.listen(serve_host, serve_port);
      g_service = nullptr;
    } else if (enum_cmd->parsed()) {
      auto schema = ContextSchema::load(enum_schema);
      auto contexts = sample_contexts(schema, enum_count, enum_seed);
      std::vector<WindowRecord> windows;
      std::size_t n = 0;
      for (std::size_t r = 0; r < enum_repeat; ++r) {
        for (const auto& c : contexts) {
          WindowRecord w;
          w.window_id = "w" + std::to_string(n);
          w.start = std::to_string(static_cast<double>(n) * schema.window_seconds());
          w.context = c;
          w.context.user = enum_user;
          windows.push_back(std::move(w));
          ++n;
        }
      }
      io::write_file_atomic(enum_out, format_windows_file(windows));
      print({{"contexts", contexts.size()}, {"windows", windows.size()}});
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
