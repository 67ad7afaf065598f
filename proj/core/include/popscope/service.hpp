#pragma once

#include <atomic>
#include <memory>
#include <string>

#include "popscope/app.hpp"

namespace httplib {
class Server;
}

namespace popscope {

/// Local HTTP API over an App. Mutating long-running calls (collect, embed,
/// projection, probe runs) return 202 with a job id; poll /api/jobs/:id.
class Service {
 public:
  explicit Service(App& app);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  /// Throws Error when the port is taken.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Call after bind().
  void listen();
  void stop();

  JobQueue& jobs() { return *jobs_; }

 private:
  void routes();

  App& app_;
  std::unique_ptr<JobQueue> jobs_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace popscope
