#include "contextgpt/service.hpp"

#include <httplib.h>

#include "contextgpt/io.hpp"

namespace contextgpt {

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

nlohmann::json parse_body(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("request body is not JSON: ") + e.what());
  }
}

// Maps library exceptions onto structured error payloads.
template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const DuplicateIdError& e) {
      send_error(res, 409, "duplicate_id", e.what());
    } catch (const UnknownIdError& e) {
      send_error(res, 404, "unknown_id", e.what());
    } catch (const ParseError& e) {
      send_error(res, 400, "parse_error", e.what());
    } catch (const ValidationError& e) {
      send_error(res, 400, "validation_error", e.what());
    } catch (const AuthError& e) {
      send_error(res, 502, "backend_auth", e.what());
    } catch (const TransportError& e) {
      send_error(res, 502, "backend_unavailable", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

}  // namespace

Service::Service(Pipeline& pipeline) : pipeline_(pipeline), server_(std::make_unique<httplib::Server>()) {
  // httplib's default adds SO_REUSEPORT, which lets a second server silently
  // share a port that is already taken.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  routes();
}

Service::~Service() { stop(); }

void Service::routes() {
  auto& srv = *server_;
  Pipeline& p = pipeline_;

  srv.Get("/schema", guarded([&p](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, p.schema().to_json());
          }));

  srv.Get("/activities", guarded([&p](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, p.schema().activities().names());
          }));

  srv.Get("/pool", guarded([&p](const httplib::Request&, httplib::Response& res) {
            nlohmann::json out = nlohmann::json::array();
            for (const auto& e : p.pool().list()) out.push_back(example_to_json(e));
            send_json(res, 200, out);
          }));

  srv.Post("/pool", guarded([&p](const httplib::Request& req, httplib::Response& res) {
             auto body = parse_body(req);
             if (!body.contains("z")) body["z"] = p.schema().window_seconds();
             Example e = example_from_json(body);
             p.add_example(e);
             for (const auto& x : p.pool().list())
               if (x.id == e.id) return send_json(res, 201, example_to_json(x));
           }));

  srv.Delete(R"(/pool/([^/]+))", guarded([&p](const httplib::Request& req, httplib::Response& res) {
               std::string id = req.matches[1];
               p.remove_example(id);
               send_json(res, 200, {{"removed", id}});
             }));

  srv.Post("/similarity", guarded([&p](const httplib::Request& req, httplib::Response& res) {
             auto snap = snapshot_from_request(parse_body(req), p.schema());
             nlohmann::json scores = nlohmann::json::array();
             for (const auto& s : p.similarity(snap)) scores.push_back({{"id", s.example.id}, {"score", s.score}});
             send_json(res, 200, {{"description", p.describe(snap)}, {"scores", scores}});
           }));

  srv.Post("/probe", guarded([&p](const httplib::Request& req, httplib::Response& res) {
             auto body = parse_body(req);
             auto snap = snapshot_from_request(body, p.schema());
             if (body.value("dry_run", false)) {
               send_json(res, 200, {{"canonical_key", canonical_key(p.schema(), snap)},
                                    {"description", p.describe(snap)}});
               return;
             }
             double k = body.value("k", p.config().k);
             if (!(k >= 0.0 && k <= 1.0)) throw ValidationError("k must lie in [0, 1]");
             auto outcome = p.process(snap, k);
             send_json(res, 200, outcome.to_json(p.schema().activities()));
           }));

  srv.Post("/batch", guarded([&p](const httplib::Request& req, httplib::Response& res) {
             auto body = parse_body(req);
             if (!body.contains("windows_ref")) throw ValidationError("batch needs 'windows_ref'");
             std::filesystem::path windows = body.at("windows_ref").get<std::string>();
             double k = body.value("k", p.config().k);
             std::filesystem::path out = body.contains("out") ? std::filesystem::path(body.at("out").get<std::string>())
                                                              : p.config().out;
             auto ingest = ingest_windows(windows, p.schema());
             auto result = p.run_batch(ingest.records, k);
             if (!out.empty()) io::write_file_atomic(out, format_vector_file(result.rows));
             nlohmann::json errors = nlohmann::json::array();
             for (const auto& e : ingest.errors) errors.push_back({{"line", e.line}, {"message", e.message}});
             send_json(res, 200,
                       {{"summary", result.summary.to_json()},
                        {"ingest_errors", errors},
                        {"out", out.string()}});
           }));
}

void Service::listen(const std::string& host, int port) {
  if (!server_->bind_to_port(host, port))
    throw Error("cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
  server_->listen_after_bind();
}

int Service::start_background(const std::string& host) {
  int port = server_->bind_to_any_port(host);
  if (port <= 0) throw Error("cannot bind an ephemeral port on " + host);
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void Service::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace contextgpt
