#pragma once

// HTTP front of the service:
//   POST /webhook                      202 | 400 | 401 | 503
//   GET  /status                       scheduler snapshot
//   POST /admin/reclaim                bearer token, kills the oldest running task
//   POST /admin/cancel/{repo}/{pr}     bearer token, kills every live task of the PR

#include <memory>
#include <string>
#include <thread>

#include "lightci/config.hpp"
#include "lightci/engine.hpp"
#include "lightci/gateway.hpp"

namespace httplib {
class Server;
}

namespace lightci {

class BindError : public Error {
 public:
  using Error::Error;
};

class Daemon {
 public:
  explicit Daemon(ServiceConfig config, EngineOptions options = {});
  ~Daemon();
  Daemon(const Daemon&) = delete;
  Daemon& operator=(const Daemon&) = delete;

  /// Binds listen_address (port 0 picks a free port) and serves on a
  /// background thread. Throws BindError.
  void start();
  /// Stops accepting requests, then shuts the engine down.
  void stop();
  /// Blocks until stop() is called from another thread.
  void wait();

  int port() const { return port_; }
  std::string base_url() const;
  Engine& engine() { return *engine_; }

 private:
  void routes();

  ServiceConfig config_;
  std::unique_ptr<Engine> engine_;
  std::unique_ptr<httplib::Server> server_;
  DeliveryDedup dedup_;
  std::string host_;
  int port_ = 0;
  std::thread thread_;
  std::mutex stop_mu_;
  std::condition_variable stop_cv_;
  bool stopped_ = false;
};

}  // namespace lightci
