#include "lightci/scheduler.hpp"

#include <algorithm>

namespace lightci {

Scheduler::Scheduler(SchedulerOptions opts, const Clock& clock, Observer observer,
                     Terminator terminator)
    : opts_(opts), clock_(clock), observer_(std::move(observer)), terminator_(std::move(terminator)) {
  if (opts_.max_run_queue < 1) throw ValidationError("max_run_queue", "must be >= 1");
}

PrTask Scheduler::make_task(const PrEvent& ev, int priority) {
  PrTask t;
  t.task_id = next_id_++;
  t.repo_id = ev.repo_id;
  t.pr_number = ev.pr_number;
  t.generation = ++generations_[{ev.repo_id, ev.pr_number}];
  t.head_commit = ev.head_commit;
  t.source_branch = ev.source_branch;
  t.target_branch = ev.target_branch;
  t.priority = priority;
  return t;
}

PrTask& Scheduler::at(TaskId id) {
  auto it = tasks_.find(id);
  if (it == tasks_.end()) throw UnknownTask(id);
  return it->second;
}

const PrTask* Scheduler::find(TaskId id) const {
  auto it = tasks_.find(id);
  return it == tasks_.end() ? nullptr : &it->second;
}

std::vector<TaskId> Scheduler::live_tasks(const std::string& repo_id,
                                          std::uint64_t pr_number) const {
  std::vector<TaskId> out;
  for (const auto& [id, t] : tasks_)
    if (t.repo_id == repo_id && t.pr_number == pr_number && t.state.live()) out.push_back(id);
  return out;
}

void Scheduler::transition(PrTask& task, TaskState to, const std::string& reason) {
  if (!validate_transition(task.state, to))
    throw IllegalState("task " + std::to_string(task.task_id) + ": " + to_string(task.state) +
                       " -> " + to_string(to));
  TransitionRecord rec{clock_.now(), task.task_id, task.state, to, reason,
                       task.repo_id, task.pr_number, task.generation};
  task.state = to;
  if (observer_) observer_(rec);
}

void Scheduler::remove_from_queues(TaskId id) {
  std::erase(wait_queue_, id);
  std::erase(run_queue_, id);
}

void Scheduler::kill_task(PrTask& task, const std::string& reason) {
  transition(task, TaskState::hanging(), reason);
  remove_from_queues(task.task_id);
  if (terminator_) terminator_(task);
  task.child_process_ids.clear();
  task.finished_at = clock_.now();
  transition(task, TaskState::exit(Verdict::Killed), reason);
  ++counters_.killed;
  --counters_.live;
  if (reason == "superseded") ++counters_.killed_superseded;
  else if (reason == "reclaimed") ++counters_.killed_reclaimed;
  else if (reason == "cancelled") ++counters_.killed_cancelled;
  terminal_order_.push_back(task.task_id);
  prune_history();
}

void Scheduler::prune_history() {
  while (terminal_order_.size() > opts_.history_limit) {
    tasks_.erase(terminal_order_.front());
    terminal_order_.pop_front();
  }
}

SubmitOutcome Scheduler::submit(PrTask task) {
  if (task.state != TaskState::ready())
    throw IllegalState("submit: task " + std::to_string(task.task_id) + " is not Ready");
  if (tasks_.count(task.task_id))
    throw IllegalState("submit: duplicate task id " + std::to_string(task.task_id));

  if (opts_.wait_capacity) {
    std::size_t freed = 0;
    if (opts_.supersede_enabled) {
      for (TaskId id : wait_queue_) {
        const auto& t = tasks_.at(id);
        if (t.repo_id == task.repo_id && t.pr_number == task.pr_number &&
            t.generation < task.generation)
          ++freed;
      }
    }
    if (wait_queue_.size() - freed >= *opts_.wait_capacity) throw WaitQueueFull();
  }

  SubmitOutcome out;
  out.task_id = task.task_id;
  if (opts_.supersede_enabled) out.killed = supersede(task.repo_id, task.pr_number, task.generation);

  task.submitted_at = clock_.now();
  const TaskId id = task.task_id;
  TransitionRecord rec{task.submitted_at, id, std::nullopt, TaskState::ready(), "submitted",
                       task.repo_id, task.pr_number, task.generation};
  tasks_.emplace(id, std::move(task));
  wait_queue_.push_back(id);
  ++counters_.enqueued;
  ++counters_.live;
  if (observer_) observer_(rec);
  return out;
}

std::optional<TaskId> Scheduler::admit() {
  if (run_queue_.size() >= opts_.max_run_queue || wait_queue_.empty()) return std::nullopt;
  auto best = wait_queue_.begin();
  for (auto it = wait_queue_.begin(); it != wait_queue_.end(); ++it)
    if (tasks_.at(*it).priority < tasks_.at(*best).priority) best = it;
  const TaskId id = *best;
  wait_queue_.erase(best);
  PrTask& task = tasks_.at(id);
  task.started_at = clock_.now();
  transition(task, TaskState::run(), "admitted");
  run_queue_.push_back(id);
  counters_.peak_running = std::max<std::uint64_t>(counters_.peak_running, run_queue_.size());
  return id;
}

std::vector<TaskId> Scheduler::supersede(const std::string& repo_id, std::uint64_t pr_number,
                                         std::uint64_t new_generation) {
  std::vector<TaskId> killed;
  for (TaskId id : live_tasks(repo_id, pr_number)) {
    PrTask& t = tasks_.at(id);
    if (t.generation < new_generation) {
      kill_task(t, "superseded");
      killed.push_back(id);
    }
  }
  return killed;
}

std::optional<TaskId> Scheduler::reclaim_oldest() {
  PrTask* oldest = nullptr;
  for (TaskId id : run_queue_) {
    PrTask& t = tasks_.at(id);
    if (t.state != TaskState::run()) continue;
    if (!oldest || *t.started_at < *oldest->started_at ||
        (*t.started_at == *oldest->started_at && t.task_id < oldest->task_id))
      oldest = &t;
  }
  if (!oldest) return std::nullopt;
  const TaskId id = oldest->task_id;
  kill_task(*oldest, "reclaimed");
  return id;
}

std::vector<TaskId> Scheduler::cancel(const std::string& repo_id, std::uint64_t pr_number) {
  std::vector<TaskId> ids = live_tasks(repo_id, pr_number);
  for (TaskId id : ids) kill_task(tasks_.at(id), "cancelled");
  return ids;
}

bool Scheduler::kill(TaskId id, const std::string& reason) {
  auto it = tasks_.find(id);
  if (it == tasks_.end() || it->second.state.terminal()) return false;
  kill_task(it->second, reason);
  return true;
}

void Scheduler::on_task_finished(TaskId id, PipelineResult result) {
  PrTask& task = at(id);
  if (task.state != TaskState::run())
    throw IllegalState("on_task_finished: task " + std::to_string(id) + " is " +
                       to_string(task.state));
  const bool pass = result.verdict == PipelineVerdict::Success;
  result.task_id = id;
  task.pipeline_result = std::move(result);
  task.child_process_ids.clear();
  task.finished_at = clock_.now();
  std::erase(run_queue_, id);
  transition(task, TaskState::exit(pass ? Verdict::Pass : Verdict::Fail),
             pass ? "pipeline passed" : "pipeline failed");
  ++(pass ? counters_.passed : counters_.failed);
  --counters_.live;
  terminal_order_.push_back(id);
  prune_history();
}

void Scheduler::set_waiting(TaskId id, bool waiting) {
  PrTask& task = at(id);
  if (waiting) {
    if (task.state == TaskState::run()) transition(task, TaskState::wait(), "workspace lock busy");
  } else if (task.state == TaskState::wait()) {
    transition(task, TaskState::run(), "workspace lock acquired");
  }
}

bool Scheduler::register_process(TaskId id, pid_t pgid) {
  auto it = tasks_.find(id);
  if (it == tasks_.end() || it->second.state.terminal() ||
      it->second.state == TaskState::hanging())
    return false;
  it->second.child_process_ids.insert(pgid);
  return true;
}

void Scheduler::unregister_process(TaskId id, pid_t pgid) {
  auto it = tasks_.find(id);
  if (it != tasks_.end()) it->second.child_process_ids.erase(pgid);
}

void Scheduler::attach_result(TaskId id, PipelineResult result) {
  auto it = tasks_.find(id);
  if (it == tasks_.end()) return;
  result.task_id = id;
  it->second.pipeline_result = std::move(result);
}

void Scheduler::set_workspace(TaskId id, std::optional<std::string> path) {
  auto it = tasks_.find(id);
  if (it != tasks_.end()) it->second.workspace_path = std::move(path);
}

SchedulerSnapshot Scheduler::snapshot() const {
  SchedulerSnapshot s;
  s.wait_queue.assign(wait_queue_.begin(), wait_queue_.end());
  s.run_queue = run_queue_;
  for (const auto& [id, t] : tasks_)
    if (t.state.live()) s.tasks.push_back(t);
  for (const auto& [id, t] : tasks_)
    if (t.state.terminal()) s.tasks.push_back(t);
  s.counters = counters_;
  return s;
}

SchedulerSnapshot Scheduler::summary_snapshot() const {
  auto strip = [](const PrTask& t) {
    PrTask c;
    c.task_id = t.task_id;
    c.repo_id = t.repo_id;
    c.pr_number = t.pr_number;
    c.generation = t.generation;
    c.head_commit = t.head_commit;
    c.source_branch = t.source_branch;
    c.target_branch = t.target_branch;
    c.state = t.state;
    c.priority = t.priority;
    c.submitted_at = t.submitted_at;
    c.started_at = t.started_at;
    c.finished_at = t.finished_at;
    c.workspace_path = t.workspace_path;
    c.child_process_ids = t.child_process_ids;
    if (t.pipeline_result) {
      PipelineResult r;
      r.task_id = t.pipeline_result->task_id;
      r.verdict = t.pipeline_result->verdict;
      r.cpu_proxy = t.pipeline_result->cpu_proxy;
      for (auto [src, dst] : {std::pair{&t.pipeline_result->prebuild_results, &r.prebuild_results},
                              std::pair{&t.pipeline_result->postbuild_results, &r.postbuild_results}})
        for (const auto& cr : *src)
          dst->push_back(CheckResult{cr.plugin_name, cr.status, cr.duration_ms, {}, {}, cr.advisory});
      c.pipeline_result = std::move(r);
    }
    return c;
  };
  SchedulerSnapshot s;
  s.wait_queue.assign(wait_queue_.begin(), wait_queue_.end());
  s.run_queue = run_queue_;
  for (const auto& [id, t] : tasks_)
    if (t.state.live()) s.tasks.push_back(strip(t));
  for (const auto& [id, t] : tasks_)
    if (t.state.terminal()) s.tasks.push_back(strip(t));
  s.counters = counters_;
  return s;
}

}  // namespace lightci
