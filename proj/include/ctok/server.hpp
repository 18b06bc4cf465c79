#pragma once

#include "ctok/error.hpp"
#include "ctok/studio.hpp"

#include <memory>
#include <string>

namespace httplib {
class Server;
}

namespace ctok {

// 400 for malformed requests, 404 for unknown ids, 409 for ConceptBusy.
int http_status(ErrorCode code);

class StudioServer {
 public:
  explicit StudioServer(Studio& studio);
  ~StudioServer();

  // Port 0 picks a free port; returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void run();
  void stop();
  void wait_until_ready() const;

 private:
  void routes();

  Studio& studio_;
  std::unique_ptr<httplib::Server> http_;
};

}  // namespace ctok
