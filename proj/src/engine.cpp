#include "lightci/engine.hpp"

#include <spdlog/spdlog.h>

namespace lightci {

namespace fs = std::filesystem;
using std::chrono::milliseconds;

namespace {

milliseconds secs(double s) { return milliseconds(static_cast<std::int64_t>(s * 1000.0)); }

nlohmann::json result_to_json(const CheckResult& r) {
  nlohmann::json j{{"plugin", r.plugin_name},
                   {"status", to_string(r.status)},
                   {"duration_ms", r.duration_ms},
                   {"advisory", r.advisory}};
  if (!r.artifact_paths.empty()) j["artifacts"] = r.artifact_paths;
  return j;
}

}  // namespace

nlohmann::json counters_to_json(const SchedulerCounters& c) {
  return {{"enqueued", c.enqueued},
          {"passed", c.passed},
          {"failed", c.failed},
          {"killed", c.killed},
          {"killed_superseded", c.killed_superseded},
          {"killed_reclaimed", c.killed_reclaimed},
          {"killed_cancelled", c.killed_cancelled},
          {"live", c.live},
          {"peak_running", c.peak_running}};
}

nlohmann::json task_to_json(const PrTask& t) {
  nlohmann::json j{{"task_id", t.task_id},
                   {"repo", t.repo_id},
                   {"pr", t.pr_number},
                   {"generation", t.generation},
                   {"head_sha", t.head_commit},
                   {"state", to_string(t.state)},
                   {"priority", t.priority},
                   {"submitted_at", t.submitted_at},
                   {"processes", t.child_process_ids}};
  if (t.started_at) j["started_at"] = *t.started_at;
  if (t.finished_at) j["finished_at"] = *t.finished_at;
  if (t.workspace_path) j["workspace"] = *t.workspace_path;
  if (t.pipeline_result) {
    auto& r = *t.pipeline_result;
    nlohmann::json pre = nlohmann::json::array(), post = nlohmann::json::array();
    for (const auto& c : r.prebuild_results) pre.push_back(result_to_json(c));
    for (const auto& c : r.postbuild_results) post.push_back(result_to_json(c));
    j["pipeline"] = {{"verdict", to_string(r.verdict)}, {"cpu_proxy", r.cpu_proxy}, {"prebuild", pre},
                     {"postbuild", post}};
  }
  return j;
}

Engine::Engine(ServiceConfig config, EngineOptions options)
    : config_(std::move(config)),
      options_(std::move(options)),
      started_(std::chrono::steady_clock::now()),
      builder_((fs::create_directories(config_.state_dir), config_.state_dir)),
      reaper_(secs(config_.kill_grace_seconds)) {
  store_ = options_.store ? std::move(*options_.store) : load_store(config_.effective_plugins_dir(), config_);
  options_.store.reset();
  workspaces_ = options_.workspaces
                    ? options_.workspaces
                    : std::make_shared<SourceManager>(config_.state_dir, config_.repositories,
                                                      secs(config_.lock_timeout_seconds));
  if (options_.write_journal) journal_ = std::make_unique<Journal>(journal_path());
  if (!config_.code_host_base_url.empty())
    code_host_ = std::make_unique<CodeHostClient>(config_.code_host_base_url, config_.code_host_token,
                                                  milliseconds(config_.http_retry_base_ms));
  aging_ = std::make_unique<AgingTracker>(store_, config_.aging_window, config_.state_dir / "aging.json");

  SchedulerOptions so;
  so.max_run_queue = config_.max_run_queue;
  so.wait_capacity = config_.wait_queue_capacity;
  so.supersede_enabled = options_.supersede_enabled;
  so.history_limit = 512;
  scheduler_ = std::make_unique<Scheduler>(
      so, clock_,
      [this](const TransitionRecord& rec) {
        if (journal_) journal_->append(rec);
        spdlog::debug("task {} {} -> {} ({})", rec.task_id, rec.from ? to_string(*rec.from) : "None",
                      to_string(rec.to), rec.reason);
      },
      [this](PrTask& t) { on_terminate(t); });
  admission_open_ = !options_.admission_held;
  publish();

  actor_ = std::thread([this] { actor_loop(); });
  timer_ = std::thread([this] {
    std::unique_lock lk(timer_mu_);
    while (!timer_cv_.wait_for(lk, options_.housekeeping_interval, [this] { return timer_stop_; })) {
      lk.unlock();
      post([this] { housekeeping(); });
      lk.lock();
    }
  });
}

Engine::~Engine() {
  shutdown(secs(config_.shutdown_grace_seconds));
}

void Engine::post(std::function<void()> fn) {
  {
    std::lock_guard lk(queue_mu_);
    queue_.push_back(std::move(fn));
  }
  queue_cv_.notify_one();
}

void Engine::actor_loop() {
  for (;;) {
    std::function<void()> fn;
    {
      std::unique_lock lk(queue_mu_);
      queue_cv_.wait(lk, [this] { return actor_stop_ || !queue_.empty(); });
      if (queue_.empty()) return;
      fn = std::move(queue_.front());
      queue_.pop_front();
    }
    try {
      fn();
    } catch (const std::exception& e) {
      spdlog::error("scheduler command failed: {}", e.what());
    }
    after_command();
  }
}

void Engine::after_command() noexcept {
  try {
    pump();
    publish();
  } catch (const std::exception& e) {
    spdlog::error("scheduler pump failed: {}", e.what());
  }
}

void Engine::pump() {
  if (shutting_down_ || !admission_open_) return;
  while (auto id = scheduler_->admit()) start_worker(*id);
}

void Engine::publish() {
  auto s = std::make_shared<EngineStatus>();
  s->snapshot = scheduler_->summary_snapshot();
  s->uptime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  std::lock_guard lk(status_mu_);
  status_ = std::move(s);
}

std::shared_ptr<const EngineStatus> Engine::status() const {
  std::lock_guard lk(status_mu_);
  return status_;
}

nlohmann::json Engine::status_json() const {
  auto s = status();
  const double uptime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : s->snapshot.tasks) tasks.push_back(task_to_json(t));
  return {{"uptime_s", uptime},
          {"max_run_queue", config_.max_run_queue},
          {"wait_queue", s->snapshot.wait_queue},
          {"run_queue", s->snapshot.run_queue},
          {"tasks", tasks},
          {"counters", counters_to_json(s->snapshot.counters)},
          {"shutting_down", shutting_down_.load()}};
}

void Engine::on_terminate(PrTask& task) {
  if (auto it = cancels_.find(task.task_id); it != cancels_.end()) it->second->flag = true;
  for (pid_t pgid : task.child_process_ids) reaper_.terminate(pgid);
}

void Engine::housekeeping() {
  reap_workers();
  if (config_.memory_budget_bytes == 0) return;
  std::uint64_t rss = 0;
  for (const auto& t : scheduler_->summary_snapshot().tasks)
    for (pid_t pgid : t.child_process_ids) rss += group_rss_bytes(pgid);
  if (rss > config_.memory_budget_bytes) {
    if (auto id = scheduler_->reclaim_oldest())
      spdlog::warn("memory pressure: {} bytes over budget {}, reclaimed task {}", rss,
                   config_.memory_budget_bytes, *id);
  }
}

DispatchOutcome Engine::dispatch(const PrEvent& ev, int priority) {
  if (shutting_down_) throw ShuttingDown();
  DispatchOutcome out;
  if (!options_.accept_unknown_repos && !config_.find_repo(ev.repo_id)) {
    out.kind = DispatchOutcome::Kind::Ignored;
    out.reason = "repository not configured: " + ev.repo_id;
    return out;
  }
  if (ev.action == PrAction::Closed) {
    out.kind = DispatchOutcome::Kind::Cancelled;
    out.task_ids = cancel(ev.repo_id, ev.pr_number);
    out.reason = "pull request closed";
    return out;
  }
  auto submitted = call([&] {
    if (shutting_down_) throw ShuttingDown();
    return scheduler_->submit(scheduler_->make_task(ev, priority));
  });
  out.task_id = submitted.task_id;
  out.task_ids = submitted.killed;
  out.kind = submitted.killed.empty() ? DispatchOutcome::Kind::Enqueued : DispatchOutcome::Kind::Superseded;
  return out;
}

std::vector<TaskId> Engine::cancel(const std::string& repo_id, std::uint64_t pr_number) {
  return call([&] { return scheduler_->cancel(repo_id, pr_number); });
}

std::optional<TaskId> Engine::reclaim() {
  return call([&] { return scheduler_->reclaim_oldest(); });
}

void Engine::set_admission(bool open) {
  call([this, open] { admission_open_ = open; });
}

std::size_t Engine::active_workers() const {
  std::lock_guard lk(workers_mu_);
  std::size_t n = 0;
  for (const auto& w : workers_)
    if (!*w.done) ++n;
  return n;
}

void Engine::reap_workers() {
  std::list<Worker> finished;
  {
    std::lock_guard lk(workers_mu_);
    for (auto it = workers_.begin(); it != workers_.end();) {
      if (*it->done) {
        auto next = std::next(it);
        finished.splice(finished.end(), workers_, it);
        it = next;
      } else {
        ++it;
      }
    }
  }
  for (auto& w : finished) w.thread.join();
}

void Engine::start_worker(TaskId id) {
  const PrTask* t = scheduler_->find(id);
  if (!t) return;
  auto cancel = std::make_shared<Cancel>();
  cancels_[id] = cancel;
  auto done = std::make_shared<std::atomic<bool>>(false);
  std::lock_guard lk(workers_mu_);
  workers_.push_back(Worker{std::thread([this, task = *t, cancel, done] {
                              run_task(task, cancel);
                              *done = true;
                              workers_cv_.notify_all();
                            }),
                            done});
}

void Engine::run_task(PrTask task, std::shared_ptr<Cancel> cancel) {
  const TaskId id = task.task_id;
  auto cancelled = [cancel] { return cancel->flag.load(); };
  PipelineResult result;
  result.task_id = id;
  bool have_workspace = false;
  bool have_root = false;
  try {
    Workspace ws = workspaces_->derive_workspace(task, [this, id](bool waiting) {
      post([this, id, waiting] {
        const PrTask* t = scheduler_->find(id);
        if (t && t->state.live() && t->state != TaskState::hanging()) scheduler_->set_waiting(id, waiting);
      });
    });
    have_workspace = true;
    post([this, id, p = ws.path.string()] { scheduler_->set_workspace(id, p); });

    if (cancelled()) {
      result.verdict = PipelineVerdict::Killed;
    } else {
      std::vector<std::string> platforms;
      for (const auto& d : execution_plan(store_, Group::PostBuild)) platforms.push_back(d.name);
      const fs::path root = builder_.prepare_build_root(task, ws.path, platforms);
      have_root = true;

      PluginContext ctx;
      ctx.task = task;
      ctx.workspace = ws.path;
      ctx.build_root = root;
      ctx.config = &config_;
      ctx.kill_grace = secs(config_.kill_grace_seconds);
      ctx.gating = options_.gating;
      ctx.cancelled = cancelled;
      ctx.on_spawn = [this, id](pid_t pgid) { return call([&] { return scheduler_->register_process(id, pgid); }); };
      ctx.on_exit = [this, id](pid_t pgid) { post([this, id, pgid] { scheduler_->unregister_process(id, pgid); }); };
      ctx.builtin_override = options_.builtin_override;

      PipelineHooks hooks;
      hooks.code_host = code_host_.get();
      hooks.aging = aging_.get();
      result = run_pipeline(task, store_, ctx, hooks);
    }
  } catch (const std::exception& e) {
    spdlog::error("task {} ({} #{}): {}", id, task.repo_id, task.pr_number, e.what());
    result = PipelineResult{};
    result.task_id = id;
    result.verdict = cancelled() ? PipelineVerdict::Killed : PipelineVerdict::PrebuildFailed;
    if (code_host_ && !cancelled()) {
      try {
        code_host_->comment(task.repo_id, task.pr_number,
                            "lightci: could not run checks for " + task.head_commit.substr(0, 12) + ": " + e.what());
      } catch (const std::exception& ce) {
        spdlog::warn("comment for task {}: {}", id, ce.what());
      }
    }
  }

  if (have_root) builder_.release_build_root(id);
  if (have_workspace) {
    try {
      workspaces_->release_workspace(id);
    } catch (const std::exception& e) {
      spdlog::warn("release workspace of task {}: {}", id, e.what());
    }
  }
  if (options_.on_pipeline) options_.on_pipeline(task, result);
  finish_task(id, std::move(result));
}

void Engine::finish_task(TaskId id, PipelineResult result) {
  post([this, id, result = std::move(result)]() mutable {
    cancels_.erase(id);
    const PrTask* t = scheduler_->find(id);
    if (!t) return;
    if (t->state == TaskState::wait()) scheduler_->set_waiting(id, false);
    if (t->state == TaskState::run()) scheduler_->on_task_finished(id, std::move(result));
    else scheduler_->attach_result(id, std::move(result));
  });
}

bool Engine::wait_idle(milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const bool idle = call([this] { return scheduler_->idle(); });
    if (idle && active_workers() == 0 && reaper_.pending() == 0) return true;
    if (std::chrono::steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(milliseconds(10));
  }
}

void Engine::shutdown(milliseconds grace) {
  if (shut_down_.exchange(true)) return;
  {
    std::lock_guard lk(timer_mu_);
    timer_stop_ = true;
  }
  timer_cv_.notify_all();
  if (timer_.joinable()) timer_.join();

  call([this] {
    shutting_down_ = true;
    for (const auto& t : scheduler_->summary_snapshot().tasks)
      if (t.state.live()) scheduler_->kill(t.task_id, "shutdown");
  });

  const auto deadline = std::chrono::steady_clock::now() + grace;
  {
    std::unique_lock lk(workers_mu_);
    workers_cv_.wait_until(lk, deadline, [this] {
      for (const auto& w : workers_)
        if (!*w.done) return false;
      return true;
    });
  }
  // Workers still inside a plugin have been cancelled; their supervisors
  // escalate to SIGKILL after the kill grace, so joining terminates.
  {
    std::list<Worker> all;
    {
      std::lock_guard lk(workers_mu_);
      all.swap(workers_);
    }
    for (auto& w : all) w.thread.join();
  }
  reaper_.wait_idle();

  {
    std::lock_guard lk(queue_mu_);
    actor_stop_ = true;
  }
  queue_cv_.notify_all();
  if (actor_.joinable()) actor_.join();
  publish();
}

}  // namespace lightci
