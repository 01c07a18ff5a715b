#pragma once

// PR Scheduler and PR Killer.
//
// Scheduler is a single-owner state machine: it holds every PrTask, the FIFO
// wait queue and the bounded run queue, and it is the only code that mutates
// task state. It performs no I/O itself; process teardown and resource
// release are delegated to the Terminator hook when a task enters Hanging,
// and every state change is reported to the Observer (the journal).

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lightci/model.hpp"

namespace lightci {

class WaitQueueFull : public Error {
 public:
  WaitQueueFull() : Error("wait queue is at capacity") {}
};

class UnknownTask : public Error {
 public:
  explicit UnknownTask(TaskId id) : Error("unknown task " + std::to_string(id)) {}
};

/// One observed state change. `from` is empty for task creation.
struct TransitionRecord {
  Nanos ts = 0;
  TaskId task_id = 0;
  std::optional<TaskState> from;
  TaskState to;
  std::string reason;
  std::string repo_id;
  std::uint64_t pr_number = 0;
  std::uint64_t generation = 0;
};

struct SchedulerOptions {
  std::uint32_t max_run_queue = 4;
  std::optional<std::uint32_t> wait_capacity;
  /// Disabled by the simulator's baseline policy.
  bool supersede_enabled = true;
  /// Terminal tasks retained for status queries.
  std::size_t history_limit = 4096;
};

struct SchedulerCounters {
  std::uint64_t enqueued = 0;
  std::uint64_t passed = 0;
  std::uint64_t failed = 0;
  std::uint64_t killed = 0;
  std::uint64_t killed_superseded = 0;
  std::uint64_t killed_reclaimed = 0;
  std::uint64_t killed_cancelled = 0;
  std::uint64_t live = 0;
  std::uint64_t peak_running = 0;
};

struct SchedulerSnapshot {
  std::vector<TaskId> wait_queue;
  std::vector<TaskId> run_queue;  // Run and Wait tasks, admission order
  std::vector<PrTask> tasks;      // live tasks, then retained terminal ones
  SchedulerCounters counters;
};

struct SubmitOutcome {
  TaskId task_id = 0;
  std::vector<TaskId> killed;
};

class Scheduler {
 public:
  using Observer = std::function<void(const TransitionRecord&)>;
  using Terminator = std::function<void(PrTask&)>;

  Scheduler(SchedulerOptions opts, const Clock& clock, Observer observer = {},
            Terminator terminator = {});

  /// Builds a Ready task for the event with the next generation of its PR.
  /// The task is not yet known to the queues; pass it to submit().
  PrTask make_task(const PrEvent& ev, int priority = 0);

  /// Supersedes older generations of the same PR, then appends the task to
  /// the wait queue. Throws WaitQueueFull without side effects when the
  /// bounded wait queue would overflow.
  SubmitOutcome submit(PrTask task);

  /// Moves the highest-priority (lowest value), earliest-submitted waiting
  /// task into the run queue if a slot is free.
  std::optional<TaskId> admit();

  /// Kills every live task of the PR whose generation is below
  /// `new_generation`.
  std::vector<TaskId> supersede(const std::string& repo_id, std::uint64_t pr_number,
                                std::uint64_t new_generation);

  /// Kills the running task with the oldest started_at.
  std::optional<TaskId> reclaim_oldest();

  /// Kills all live tasks of the PR.
  std::vector<TaskId> cancel(const std::string& repo_id, std::uint64_t pr_number);

  /// Pipeline completion. Throws IllegalState unless the task is in Run.
  void on_task_finished(TaskId id, PipelineResult result);

  /// Kills one task regardless of PR (shutdown path). No-op if terminal.
  bool kill(TaskId id, const std::string& reason);

  /// Run <-> Wait around the shared workspace lock.
  void set_waiting(TaskId id, bool waiting);

  /// Registers a child process group; false if the task is no longer live
  /// (the caller must terminate the group itself).
  bool register_process(TaskId id, pid_t pgid);
  void unregister_process(TaskId id, pid_t pgid);

  /// Stores a result for a task that already terminated (a killed task's
  /// partial pipeline).
  void attach_result(TaskId id, PipelineResult result);

  void set_workspace(TaskId id, std::optional<std::string> path);

  const PrTask* find(TaskId id) const;
  std::vector<TaskId> live_tasks(const std::string& repo_id, std::uint64_t pr_number) const;
  std::size_t running_count() const { return run_queue_.size(); }
  std::size_t waiting_count() const { return wait_queue_.size(); }
  bool idle() const { return run_queue_.empty() && wait_queue_.empty(); }
  const SchedulerCounters& counters() const { return counters_; }
  std::uint32_t max_run_queue() const { return opts_.max_run_queue; }
  SchedulerSnapshot snapshot() const;
  /// Like snapshot() but report texts are dropped from pipeline results.
  SchedulerSnapshot summary_snapshot() const;

 private:
  void transition(PrTask& task, TaskState to, const std::string& reason);
  void kill_task(PrTask& task, const std::string& reason);
  void remove_from_queues(TaskId id);
  void prune_history();
  PrTask& at(TaskId id);

  SchedulerOptions opts_;
  const Clock& clock_;
  Observer observer_;
  Terminator terminator_;
  TaskId next_id_ = 1;
  std::map<TaskId, PrTask> tasks_;
  std::deque<TaskId> wait_queue_;
  std::vector<TaskId> run_queue_;
  std::deque<TaskId> terminal_order_;
  std::map<std::pair<std::string, std::uint64_t>, std::uint64_t> generations_;
  SchedulerCounters counters_;
};

}  // namespace lightci
