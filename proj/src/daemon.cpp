#include "lightci/daemon.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace lightci {

namespace {

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

nlohmann::json outcome_json(const DispatchOutcome& o) {
  nlohmann::json j{{"outcome", to_string(o.kind)}};
  if (o.task_id) j["task_id"] = o.task_id;
  if (!o.task_ids.empty()) j["task_ids"] = o.task_ids;
  if (!o.reason.empty()) j["reason"] = o.reason;
  return j;
}

}  // namespace

Daemon::Daemon(ServiceConfig config, EngineOptions options)
    : config_(config),
      engine_(std::make_unique<Engine>(std::move(config), std::move(options))),
      server_(std::make_unique<httplib::Server>()) {
  // SO_REUSEADDR only, no SO_REUSEPORT.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  routes();
}

Daemon::~Daemon() { stop(); }

std::string Daemon::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

void Daemon::start() {
  auto [host, port] = split_listen_address(config_.listen_address);
  host_ = host;
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
    if (port_ < 0) throw BindError("cannot bind " + host + ":0");
  } else {
    if (!server_->bind_to_port(host, port)) throw BindError("cannot bind " + config_.listen_address);
    port_ = port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  spdlog::info("listening on {}", base_url());
}

void Daemon::stop() {
  {
    std::lock_guard lk(stop_mu_);
    if (stopped_) return;
    stopped_ = true;
  }
  server_->stop();
  if (thread_.joinable()) thread_.join();
  engine_->shutdown(std::chrono::milliseconds(static_cast<std::int64_t>(config_.shutdown_grace_seconds * 1000)));
  stop_cv_.notify_all();
}

void Daemon::wait() {
  std::unique_lock lk(stop_mu_);
  stop_cv_.wait(lk, [this] { return stopped_; });
}

void Daemon::routes() {
  server_->Post("/webhook", [this](const httplib::Request& req, httplib::Response& res) {
    if (req.body.empty()) return reply(res, 400, {{"error", "empty body"}});
    Delivery d;
    d.raw_body = req.body;
    for (const auto& [k, v] : req.headers) d.headers[k] = v;

    if (config_.webhook_secret) {
      try {
        if (!verify_signature(d, *config_.webhook_secret))
          return reply(res, 401, {{"error", "signature mismatch"}});
      } catch (const MissingSignature& e) {
        return reply(res, 401, {{"error", e.what()}});
      }
    }
    if (const std::string* id = d.header(kDeliveryIdHeader); id && !dedup_.first_seen(*id))
      return reply(res, 202, {{"outcome", "Ignored"}, {"reason", "duplicate delivery " + *id}});

    PrEvent ev;
    try {
      auto parsed = parse_event(d);
      if (auto* ign = std::get_if<Ignored>(&parsed))
        return reply(res, 202, {{"outcome", "Ignored"}, {"reason", ign->reason}});
      ev = std::get<PrEvent>(std::move(parsed));
      validate(ev);
    } catch (const Error& e) {
      return reply(res, 400, {{"error", e.what()}});
    }
    try {
      reply(res, 202, outcome_json(engine_->dispatch(ev)));
    } catch (const WaitQueueFull& e) {
      res.set_header("Retry-After", "5");
      reply(res, 503, {{"error", e.what()}});
    } catch (const ShuttingDown& e) {
      reply(res, 503, {{"error", e.what()}});
    }
  });

  server_->Get("/status", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, engine_->status_json());
  });

  auto authorized = [this](const httplib::Request& req, httplib::Response& res) {
    if (!config_.admin_token) {
      reply(res, 403, {{"error", "admin API disabled (no admin_token configured)"}});
      return false;
    }
    if (req.get_header_value("Authorization") != "Bearer " + *config_.admin_token) {
      reply(res, 401, {{"error", "bad or missing bearer token"}});
      return false;
    }
    return true;
  };

  server_->Post("/admin/reclaim", [this, authorized](const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req, res)) return;
    auto id = engine_->reclaim();
    reply(res, 200, {{"reclaimed", id ? nlohmann::json(*id) : nlohmann::json(nullptr)}});
  });

  server_->Post(R"(/admin/cancel/(.+)/(\d+))",
                [this, authorized](const httplib::Request& req, httplib::Response& res) {
                  if (!authorized(req, res)) return;
                  const std::string repo = req.matches[1];
                  const std::uint64_t pr = std::stoull(req.matches[2]);
                  reply(res, 200, {{"cancelled", engine_->cancel(repo, pr)}});
                });
}

}  // namespace lightci
