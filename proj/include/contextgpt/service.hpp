#pragma once

// JSON-over-HTTP front end to a Pipeline, used by the curation UI.
//
//   GET    /schema
//   GET    /activities
//   GET    /pool
//   POST   /pool          example JSON -> 201 | 409 duplicate_id | 400
//   DELETE /pool/{id}     -> 200 | 404 unknown_id
//   POST   /similarity    {context, z?} -> per-example scores
//   POST   /probe         {context, z?, k?, dry_run?} -> every intermediate
//   POST   /batch         {windows_ref, k?, out?} -> run summary
//
// Errors are {"error": {"code": ..., "message": ...}}.

#include <memory>
#include <string>
#include <thread>

#include "contextgpt/pipeline.hpp"

namespace httplib {
class Server;
}

namespace contextgpt {

class Service {
 public:
  explicit Service(Pipeline& pipeline);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Blocks until stop(). Throws Error if the port cannot be bound.
  void listen(const std::string& host, int port);
  /// Binds an ephemeral port, serves on a background thread, returns the port.
  int start_background(const std::string& host = "127.0.0.1");
  void stop();

 private:
  void routes();

  Pipeline& pipeline_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace contextgpt
