#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include "cogscreen/active_loop.h"

namespace httplib {
class Server;
}

namespace cogscreen {

// HTTP+JSON front end of an ActiveLoop:
//   GET  /api/tasks/next?annotator=X   atomic checkout (204 when drained)
//   GET  /api/tasks/{id}               task with note text and highlight segments
//   POST /api/tasks/{id}/label         {"label": "present|absent|uncertain", "annotator": "..."}
//   POST /api/tasks/{id}/skip
//   GET  /api/metrics
//   POST /api/iterate                  queue a new batch; retrains in the background
class AnnotationService {
 public:
  explicit AnnotationService(ActiveLoop& loop, std::filesystem::path static_dir = {});
  ~AnnotationService();

  // Binds and serves on a background thread; port 0 picks a free port.
  // Returns the bound port.
  int start(const std::string& host, int port);
  // Blocks until stop() is called from another thread or a signal handler.
  void run(const std::string& host, int port);
  void stop();

 private:
  void routes();

  ActiveLoop& loop_;
  std::filesystem::path static_dir_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace cogscreen
