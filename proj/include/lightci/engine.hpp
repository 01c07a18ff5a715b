#pragma once

// The running service minus HTTP: scheduler owner thread, pipeline workers,
// journal, code-host client and aging bookkeeping.
//
// All scheduler calls are funnelled through one actor thread. Workers run
// pipelines outside it and report back with commands; /status reads a
// snapshot published after every command.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

#include <json.hpp>

#include "lightci/builder.hpp"
#include "lightci/config.hpp"
#include "lightci/gateway.hpp"
#include "lightci/inspector.hpp"
#include "lightci/journal.hpp"
#include "lightci/modulator.hpp"
#include "lightci/process.hpp"
#include "lightci/scheduler.hpp"
#include "lightci/source_manager.hpp"

namespace lightci {

class ShuttingDown : public Error {
 public:
  ShuttingDown() : Error("service is shutting down") {}
};

struct EngineOptions {
  /// Null: a SourceManager over config.repositories.
  std::shared_ptr<WorkspaceProvider> workspaces;
  /// Null: load_store(config.effective_plugins_dir(), config).
  std::optional<PluginStore> store;
  /// Accept events for repositories missing from the config (simulator).
  bool accept_unknown_repos = false;
  bool supersede_enabled = true;
  bool gating = true;
  /// Start with admission closed (see set_admission).
  bool admission_held = false;
  bool write_journal = true;
  std::function<std::optional<CheckResult>(const PluginDescriptor&, const PluginContext&)> builtin_override;
  /// Called on the worker thread with every finished pipeline.
  std::function<void(const PrTask&, const PipelineResult&)> on_pipeline;
  std::chrono::milliseconds housekeeping_interval{std::chrono::seconds(1)};
};

struct EngineStatus {
  SchedulerSnapshot snapshot;
  double uptime_s = 0;
};

class Engine {
 public:
  explicit Engine(ServiceConfig config, EngineOptions options = {});
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// Opened/Synchronized submit a new generation; Closed cancels.
  /// Throws WaitQueueFull or ShuttingDown.
  DispatchOutcome dispatch(const PrEvent& ev, int priority = 0);
  std::vector<TaskId> cancel(const std::string& repo_id, std::uint64_t pr_number);
  std::optional<TaskId> reclaim();
  /// Closed admission queues submissions without starting them; opening
  /// admits up to max_run_queue immediately.
  void set_admission(bool open);

  /// Latest published snapshot; never waits for the scheduler.
  std::shared_ptr<const EngineStatus> status() const;
  nlohmann::json status_json() const;

  /// True once no task is queued or running and every worker has exited.
  bool wait_idle(std::chrono::milliseconds timeout);

  /// Kills every live task through the Hanging path and waits up to `grace`
  /// for workers and their process groups. Idempotent.
  void shutdown(std::chrono::milliseconds grace);

  const ServiceConfig& config() const { return config_; }
  const PluginStore& store() const { return store_; }
  AgingTracker& aging() { return *aging_; }
  CodeHostClient* code_host() { return code_host_.get(); }
  WorkspaceProvider& workspaces() { return *workspaces_; }
  std::filesystem::path journal_path() const { return config_.state_dir / "journal.ndjson"; }
  /// Worker threads that have not exited yet.
  std::size_t active_workers() const;

 private:
  struct Cancel {
    std::atomic<bool> flag{false};
  };

  template <typename F>
  auto call(F&& fn) -> decltype(fn()) {
    using R = decltype(fn());
    // Admission and the published snapshot are refreshed before the caller
    // resumes, so a status read after call() observes its effect.
    auto task = std::make_shared<std::packaged_task<R()>>([this, f = std::forward<F>(fn)]() mutable -> R {
      struct After {
        Engine* e;
        ~After() { e->after_command(); }
      } after{this};
      return f();
    });
    auto fut = task->get_future();
    post([task] { (*task)(); });
    return fut.get();
  }
  void post(std::function<void()> fn);
  void actor_loop();
  void pump();
  void publish();
  void after_command() noexcept;
  void housekeeping();
  void on_terminate(PrTask& task);
  void start_worker(TaskId id);
  void run_task(PrTask task, std::shared_ptr<Cancel> cancel);
  void finish_task(TaskId id, PipelineResult result);
  void reap_workers();

  ServiceConfig config_;
  EngineOptions options_;
  MonotonicClock clock_;
  std::chrono::steady_clock::time_point started_;
  PluginStore store_;
  std::shared_ptr<WorkspaceProvider> workspaces_;
  Builder builder_;
  std::unique_ptr<Journal> journal_;
  std::unique_ptr<CodeHostClient> code_host_;
  std::unique_ptr<AgingTracker> aging_;
  ProcessReaper reaper_;
  std::unique_ptr<Scheduler> scheduler_;  // actor thread only

  std::map<TaskId, std::shared_ptr<Cancel>> cancels_;  // actor thread only

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<std::function<void()>> queue_;
  bool actor_stop_ = false;

  mutable std::mutex status_mu_;
  std::shared_ptr<const EngineStatus> status_;

  struct Worker {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };
  mutable std::mutex workers_mu_;
  std::condition_variable workers_cv_;
  std::list<Worker> workers_;

  bool admission_open_ = true;  // actor thread only
  std::atomic<bool> shutting_down_{false};
  std::atomic<bool> shut_down_{false};
  std::thread actor_;
  std::thread timer_;
  std::mutex timer_mu_;
  std::condition_variable timer_cv_;
  bool timer_stop_ = false;
};

nlohmann::json task_to_json(const PrTask& task);
nlohmann::json counters_to_json(const SchedulerCounters& c);

}  // namespace lightci
