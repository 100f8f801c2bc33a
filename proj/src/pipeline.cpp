#include "contextgpt/pipeline.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "contextgpt/io.hpp"

namespace contextgpt {

nlohmann::json WindowRecord::to_json() const {
  nlohmann::json j = {{"window_id", window_id},
                      {"user", context.user},
                      {"start", start},
                      {"z", context.window_seconds},
                      {"context", assignments_to_json(context.assignments)}};
  if (label) j["label"] = *label;
  return j;
}

namespace {

WindowRecord window_from_json(const nlohmann::json& j, const ContextSchema& schema) {
  WindowRecord w;
  try {
    w.window_id = j.at("window_id").get<std::string>();
    w.context.user = j.value("user", "");
    w.start = j.contains("start") && !j.at("start").is_null()
                  ? (j.at("start").is_string() ? j.at("start").get<std::string>() : j.at("start").dump())
                  : std::string();
    w.context.window_seconds = j.value("z", schema.window_seconds());
    w.context.assignments = assignments_from_json(j.at("context"));
    if (j.contains("label") && !j.at("label").is_null()) w.label = j.at("label").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(e.what());
  }
  if (w.window_id.empty()) throw ValidationError("window_id is empty");
  auto report = validate_snapshot(schema, w.context);
  if (!report.ok()) throw ValidationError(report.summary());
  if (w.label && !schema.activities().find(*w.label)) throw ValidationError("unknown label '" + *w.label + "'");
  return w;
}

}  // namespace

IngestResult ingest_windows(std::istream& in, const ContextSchema& schema) {
  IngestResult result;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto w = window_from_json(nlohmann::json::parse(line), schema);
      if (!ids.insert(w.window_id).second) throw ValidationError("duplicate window_id '" + w.window_id + "'");
      result.records.push_back(std::move(w));
    } catch (const std::exception& e) {
      result.errors.push_back({lineno, e.what()});
    }
  }
  return result;
}

IngestResult ingest_windows(const std::filesystem::path& path, const ContextSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open windows file " + path.string());
  return ingest_windows(in, schema);
}

std::string format_windows_file(std::span<const WindowRecord> windows) {
  std::string out;
  for (const auto& w : windows) {
    out += w.to_json().dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

RunConfig RunConfig::load(const std::filesystem::path& path) {
  RunConfig cfg;
  cfg.merge_json(io::read_json(path), path.parent_path());
  return cfg;
}

void RunConfig::merge_json(const nlohmann::json& doc, const std::filesystem::path& base) {
  auto path_field = [&](const char* name, std::filesystem::path& target) {
    if (!doc.contains(name)) return;
    std::filesystem::path p = doc.at(name).get<std::string>();
    target = p.is_relative() && !base.empty() ? base / p : p;
  };
  try {
    path_field("schema", schema);
    path_field("phrases", phrases);
    path_field("template", templ);
    path_field("pool", pool);
    path_field("embeddings", embeddings);
    path_field("rules", rules);
    path_field("cache", cache);
    path_field("out", out);
    k = doc.value("k", k);
    if (doc.contains("backend")) {
      auto b = doc.at("backend").get<std::string>();
      if (b == "mock") {
        backend = BackendKind::mock;
      } else if (b == "http") {
        backend = BackendKind::http;
      } else {
        throw ValidationError("unknown backend '" + b + "'");
      }
    }
    max_in_flight = doc.value("max_inflight", max_in_flight);
    temperature = doc.value("temperature", temperature);
    length_budget = doc.value("length_budget", length_budget);
    if (doc.contains("embedder")) {
      const auto& e = doc.at("embedder");
      embedder = e.value("kind", embedder);
      embedding_dim = e.value("dim", embedding_dim);
      embedding_seed = e.value("seed", embedding_seed);
      http_embedder.url = e.value("url", http_embedder.url);
      http_embedder.model = e.value("model", http_embedder.model);
      http_embedder.dimension = e.value("dim", http_embedder.dimension);
    }
    if (doc.contains("http")) {
      const auto& h = doc.at("http");
      http.url = h.value("url", http.url);
      http.model = h.value("model", http.model);
      http.http.timeout = std::chrono::seconds(h.value("timeout_s", static_cast<int>(http.http.timeout.count())));
      http.http.retry.max_retries = h.value("max_retries", http.http.retry.max_retries);
      http.http.retry.initial_backoff =
          std::chrono::milliseconds(h.value("backoff_ms", static_cast<int>(http.http.retry.initial_backoff.count())));
      http_embedder.http = http.http;
    }
    if (doc.contains("extraction")) {
      const auto& x = doc.at("extraction");
      auto bracket = x.value("bracket", std::string("last"));
      policy.bracket = bracket == "first" ? BracketSelection::first : BracketSelection::last;
      auto unknown = x.value("unknown", std::string("ignore"));
      policy.unknown = unknown == "fail" ? UnknownNames::fail : UnknownNames::ignore_warn;
      auto fb = x.value("fallback", std::string("all_consistent"));
      if (fb == "all_consistent") {
        policy.fallback = Fallback::all_consistent;
      } else if (fb == "all_inconsistent") {
        policy.fallback = Fallback::all_inconsistent;
      } else if (fb == "fail") {
        policy.fallback = Fallback::fail;
      } else {
        throw ValidationError("unknown fallback policy '" + fb + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
}

void RunConfig::validate() const {
  if (!(k >= 0.0 && k <= 1.0)) throw ValidationError("k must lie in [0, 1]");
  if (max_in_flight == 0) throw ValidationError("max-inflight must be at least 1");
  if (temperature < 0.0) throw ValidationError("temperature must be non-negative");
  auto require = [](const std::filesystem::path& p, const char* what) {
    if (p.empty()) throw ValidationError(std::string("no ") + what + " file configured");
    if (!std::filesystem::exists(p)) throw ValidationError(std::string(what) + " file not found: " + p.string());
  };
  require(schema, "schema");
  require(phrases, "phrase table");
  require(templ, "template");
  if (pool.empty()) throw ValidationError("no pool file configured");
  if (backend == BackendKind::mock) require(rules, "rules");
  if (backend == BackendKind::http && http.url.empty()) throw ValidationError("http backend needs a URL");
  if (embedder != "hash" && embedder != "http") throw ValidationError("unknown embedder '" + embedder + "'");
  if (embedder == "http" && http_embedder.url.empty()) throw ValidationError("http embedder needs a URL");
}

// ---------------------------------------------------------------------------

nlohmann::json ContextOutcome::to_json(const ActivitySet& acts) const {
  nlohmann::json selected = nlohmann::json::array();
  for (const auto& s : selection.selected) selected.push_back({{"id", s.example.id}, {"score", s.score}});
  nlohmann::json j = {{"canonical_key", canonical_key},
                      {"description", description},
                      {"selected", selected},
                      {"selection_diagnostics", selection.diagnostics},
                      {"prompt", prompt.to_json()},
                      {"estimated_length", estimated_length},
                      {"response", response},
                      {"vector", extraction.vector.to_json()},
                      {"activities", names_from_vector(acts, extraction.vector)},
                      {"cache_hit", cache_hit},
                      {"fallback", extraction.fallback},
                      {"diagnostics", extraction.diagnostics}};
  j["failure"] = failure ? nlohmann::json(*failure) : nlohmann::json();
  return j;
}

nlohmann::json RunSummary::to_json() const {
  return {{"windows", windows},
          {"unique_contexts", unique_contexts},
          {"backend_calls", backend_calls},
          {"cache_hits", cache_hits},
          {"fallbacks", fallbacks},
          {"failures", failures},
          {"examples_per_prompt_mean", examples_per_prompt_mean},
          {"max_prompt_length", max_prompt_length},
          {"prompts_over_budget", prompts_over_budget},
          {"unknown_names", unknown_names},
          {"k", k},
          {"backend_id", backend_id}};
}

// ---------------------------------------------------------------------------

namespace {

std::string env_api_key() {
  const char* key = std::getenv("CONTEXTGPT_API_KEY");
  return key ? key : "";
}

std::filesystem::path embeddings_path(const RunConfig& cfg) {
  if (!cfg.embeddings.empty()) return cfg.embeddings;
  auto p = cfg.pool;
  p += ".emb.jsonl";
  return p;
}

}  // namespace

Pipeline::Pipeline(RunConfig config, std::unique_ptr<Backend> backend, std::unique_ptr<Embedder> embedder)
    : config_((config.validate(), std::move(config))),
      schema_(ContextSchema::load(config_.schema)),
      phrases_(load_phrase_table_file(config_.phrases, schema_)),
      template_(load_template_file(config_.templ)),
      system_message_(build_system_message(template_, schema_.activities())),
      pool_(Pool::open(schema_, config_.pool)),
      embedder_(std::move(embedder)),
      embeddings_(std::make_unique<EmbeddingStore>(embeddings_path(config_))),
      registry_(std::make_shared<ContextRegistry>()),
      backend_(std::move(backend)),
      cache_(std::make_unique<CacheStore>(config_.cache)) {
  if (!embedder_) {
    if (config_.embedder == "http") {
      auto ecfg = config_.http_embedder;
      ecfg.api_key = env_api_key();
      embedder_ = std::make_unique<HttpEmbedder>(std::move(ecfg));
    } else {
      embedder_ = std::make_unique<HashEmbedder>(config_.embedding_dim, config_.embedding_seed);
    }
  }
  if (!backend_) {
    if (config_.backend == BackendKind::http) {
      auto hcfg = config_.http;
      hcfg.api_key = env_api_key();
      hcfg.max_in_flight = static_cast<std::ptrdiff_t>(config_.max_in_flight);
      backend_ = std::make_unique<HttpBackend>(std::move(hcfg));
    } else {
      backend_ = std::make_unique<MockBackend>(RuleSet::load(config_.rules, schema_), registry_);
    }
  }
  const auto& acts = schema_.activities();
  const auto policy = config_.policy;
  gateway_ = std::make_unique<CachedGateway>(*backend_, *cache_, [&acts, policy](const std::string& response) {
    try {
      return extract(response, acts, policy).vector;
    } catch (const ExtractionError&) {
      return fallback_vector(acts, policy);
    }
  });
  refresh_embeddings();
}

std::string Pipeline::describe(const ContextSnapshot& snap) const { return render(schema_, phrases_, snap); }

EmbedResult Pipeline::refresh_embeddings() {
  auto examples = pool_->list();
  Renderer renderer = [this](const ContextSnapshot& s) { return describe(s); };
  auto result = embed_pool(examples, renderer, *embedder_, *embeddings_);
  std::vector<std::string> ids;
  for (const auto& e : examples) ids.push_back(e.id);
  embeddings_->retain(ids);
  embeddings_->save();
  std::unique_lock lock(embedded_mutex_);
  embedded_ = result.embedded;
  return result;
}

void Pipeline::add_example(Example e) {
  pool_->add(std::move(e));
  refresh_embeddings();
}

void Pipeline::remove_example(const std::string& id) {
  pool_->remove(id);
  refresh_embeddings();
}

std::vector<EmbeddedExample> Pipeline::embedded_snapshot() const {
  std::shared_lock lock(embedded_mutex_);
  return embedded_;
}

Selection Pipeline::select(const ContextSnapshot& snap, double k) {
  auto pool = embedded_snapshot();
  Renderer renderer = [this](const ContextSnapshot& s) { return describe(s); };
  return select_examples(snap, pool, k, renderer, *embedder_);
}

std::vector<ScoredExample> Pipeline::similarity(const ContextSnapshot& snap) {
  auto pool = embedded_snapshot();
  std::vector<ScoredExample> out;
  if (pool.empty()) return out;
  auto query = embedder_->embed(describe(snap));
  auto scores = similarity_scores(query, pool);
  for (std::size_t i = 0; i < pool.size(); ++i) out.push_back({pool[i].example, scores[i]});
  return out;
}

ContextOutcome Pipeline::process(const ContextSnapshot& snap, double k) {
  ContextOutcome out;
  out.canonical_key = canonical_key(schema_, snap);
  ContextSnapshot anonymous = snap;
  anonymous.user.clear();
  registry_->add(out.canonical_key, anonymous);
  out.description = describe(snap);
  const auto& acts = schema_.activities();
  try {
    out.selection = select(snap, k);
    std::vector<RenderedExample> examples;
    examples.reserve(out.selection.selected.size());
    for (const auto& s : out.selection.selected)
      examples.push_back({describe(s.example.context), s.example.consistent, s.example.note});
    out.prompt = assemble(system_message_, examples, out.description);
    out.estimated_length = estimate_length(out.prompt);

    CompletionRequest req;
    req.prompt = out.prompt;
    req.temperature = config_.temperature;
    req.model = config_.http.model;
    req.canonical_key = out.canonical_key;
    req.k = k;
    auto completion = gateway_->complete(req);
    out.response = std::move(completion.response);
    out.cache_hit = completion.cache_hit;
    out.extraction = extract(out.response, acts, config_.policy);
  } catch (const std::exception& e) {
    out.failure = e.what();
    out.extraction = Extraction{};
    out.extraction.vector = fallback_vector(acts, config_.policy);
    out.extraction.fallback = true;
    out.extraction.diagnostics.push_back(std::string("failure: ") + e.what());
  }
  return out;
}

BatchResult Pipeline::run_batch(std::span<const WindowRecord> windows, double k) {
  if (!(k >= 0.0 && k <= 1.0)) throw ValidationError("k must lie in [0, 1]");
  const auto& acts = schema_.activities();

  // Deduplicate by canonical key, in first-appearance order.
  std::vector<std::ptrdiff_t> window_ctx(windows.size(), -1);
  std::vector<std::string> window_error(windows.size());
  std::map<std::string, std::size_t> key_index;
  std::vector<const ContextSnapshot*> unique;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    try {
      auto key = canonical_key(schema_, windows[i].context);
      auto [it, inserted] = key_index.emplace(key, unique.size());
      if (inserted) unique.push_back(&windows[i].context);
      window_ctx[i] = static_cast<std::ptrdiff_t>(it->second);
    } catch (const std::exception& e) {
      window_error[i] = e.what();
    }
  }

  const std::size_t calls_before = gateway_->backend_calls();
  std::vector<ContextOutcome> outcomes(unique.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < unique.size(); i = next++) outcomes[i] = process(*unique[i], k);
  };
  const std::size_t n_workers = std::min(config_.max_in_flight, unique.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  }

  BatchResult result;
  auto& s = result.summary;
  s.windows = windows.size();
  s.unique_contexts = unique.size();
  s.backend_calls = gateway_->backend_calls() - calls_before;
  s.k = k;
  s.backend_id = backend_->id();
  std::size_t total_examples = 0;
  for (const auto& o : outcomes) {
    s.cache_hits += o.cache_hit ? 1 : 0;
    s.failures += o.failure ? 1 : 0;
    total_examples += o.selection.selected.size();
    s.max_prompt_length = std::max(s.max_prompt_length, o.estimated_length);
    s.prompts_over_budget += o.estimated_length > config_.length_budget ? 1 : 0;
    for (const auto& u : o.extraction.unknown_names) ++s.unknown_names[u];
  }
  s.examples_per_prompt_mean = outcomes.empty() ? 0.0 : static_cast<double>(total_examples) / outcomes.size();

  result.rows.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    VectorRecord row;
    row.window_id = windows[i].window_id;
    row.k = k;
    if (window_ctx[i] < 0) {
      row.vector = fallback_vector(acts, config_.policy);
      row.fallback = true;
      row.diagnostics.push_back("invalid context: " + window_error[i]);
      ++s.failures;
    } else {
      const auto& o = outcomes[static_cast<std::size_t>(window_ctx[i])];
      row.canonical_key = o.canonical_key;
      row.vector = o.extraction.vector;
      row.cache_hit = o.cache_hit;
      row.fallback = o.extraction.fallback;
      row.diagnostics = o.extraction.diagnostics;
    }
    row.activities = names_from_vector(acts, row.vector);
    s.fallbacks += row.fallback ? 1 : 0;
    result.rows.push_back(std::move(row));
  }
  return result;
}

ContextSnapshot snapshot_from_request(const nlohmann::json& body, const ContextSchema& schema) {
  if (!body.is_object() || !body.contains("context")) throw ValidationError("request body needs a 'context' object");
  ContextSnapshot snap;
  snap.assignments = assignments_from_json(body.at("context"));
  snap.window_seconds = body.value("z", schema.window_seconds());
  snap.user = body.value("user", "");
  auto report = validate_snapshot(schema, snap);
  if (!report.ok()) throw ValidationError(report.summary());
  return snap;
}

}  // namespace contextgpt
