#pragma once

// Domain types shared by every lightci module.

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <sys/types.h>

namespace lightci {

using TaskId = std::uint64_t;
using Nanos = std::int64_t;

/// Time source for task timestamps. The daemon uses a monotonic clock;
/// the simulator drives a virtual one.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual Nanos now() const = 0;
};

class MonotonicClock final : public Clock {
 public:
  Nanos now() const override {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  }
};

class ManualClock final : public Clock {
 public:
  Nanos now() const override { return now_; }
  void set(Nanos t) { now_ = t; }
  void advance(Nanos d) { now_ += d; }

 private:
  Nanos now_ = 0;
};

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Raised when a caller drives a task along an edge the state machine forbids.
class IllegalState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// ---------------------------------------------------------------------------
// Events

enum class PrAction { Opened, Synchronized, Closed };

std::string_view to_string(PrAction a);

struct PrEvent {
  std::string repo_id;
  std::uint64_t pr_number = 0;
  PrAction action = PrAction::Opened;
  std::string head_commit;
  std::string source_branch;
  std::string target_branch;
  std::string clone_url;
  std::string delivery_id;
  Nanos received_at = 0;

  bool operator==(const PrEvent&) const = default;
};

bool is_commit_id(std::string_view s);

/// Throws ValidationError if the event breaks a field invariant.
void validate(const PrEvent& ev);

// ---------------------------------------------------------------------------
// Task state machine

enum class StateKind { Ready, Run, Wait, Hanging, Exit };
enum class Verdict { Pass, Fail, Killed };

struct TaskState {
  StateKind kind = StateKind::Ready;
  Verdict verdict = Verdict::Pass;  // meaningful only when kind == Exit

  static constexpr TaskState ready() { return {StateKind::Ready, Verdict::Pass}; }
  static constexpr TaskState run() { return {StateKind::Run, Verdict::Pass}; }
  static constexpr TaskState wait() { return {StateKind::Wait, Verdict::Pass}; }
  static constexpr TaskState hanging() { return {StateKind::Hanging, Verdict::Pass}; }
  static constexpr TaskState exit(Verdict v) { return {StateKind::Exit, v}; }

  constexpr bool terminal() const { return kind == StateKind::Exit; }
  constexpr bool live() const { return kind != StateKind::Exit; }

  friend constexpr bool operator==(TaskState a, TaskState b) {
    return a.kind == b.kind && (a.kind != StateKind::Exit || a.verdict == b.verdict);
  }
};

std::string to_string(TaskState s);
/// Inverse of to_string(TaskState); throws ParseError on unknown text.
TaskState parse_task_state(std::string_view s);

/// True iff (from, to) is one of the eight legal edges.
bool validate_transition(TaskState from, TaskState to);

/// Every well-formed state: Ready, Run, Wait, Hanging, Exit(Pass|Fail|Killed).
std::vector<TaskState> all_task_states();

// ---------------------------------------------------------------------------
// Plugins and results

enum class Tier { Base, Good, Staging };
enum class Group { PreBuild, PostBuild };
enum class PluginKind { Builtin, External };

std::string_view to_string(Tier t);
std::string_view to_string(Group g);
Tier parse_tier(std::string_view s);
Group parse_group(std::string_view s);

struct PluginDescriptor {
  std::string name;
  Tier tier = Tier::Base;
  Group group = Group::PreBuild;
  PluginKind kind = PluginKind::Builtin;
  std::string exec_path;  // External only
  int timeout_seconds = 600;
  bool enabled = true;
  int order_index = 0;

  /// Failures of staging plugins are advisory and never flip a verdict.
  bool blocking() const { return tier != Tier::Staging; }
};

enum class CheckStatus { Pass, Fail, Skipped, TimedOut, Crashed };
std::string_view to_string(CheckStatus s);

inline constexpr std::size_t kReportLimit = 64 * 1024;
inline constexpr std::string_view kTruncatedSuffix = "[truncated]";

/// Caps text at kReportLimit bytes, appending the truncation marker.
std::string bound_report(std::string text);

struct CheckResult {
  std::string plugin_name;
  CheckStatus status = CheckStatus::Pass;
  std::int64_t duration_ms = 0;
  std::string report_text;
  std::vector<std::string> artifact_paths;
  bool advisory = false;  // produced by a staging plugin

  bool failed() const {
    return status == CheckStatus::Fail || status == CheckStatus::TimedOut ||
           status == CheckStatus::Crashed;
  }
};

enum class PipelineVerdict { Success, PrebuildFailed, PostbuildFailed, Killed };
std::string_view to_string(PipelineVerdict v);

struct PipelineResult {
  TaskId task_id = 0;
  std::vector<CheckResult> prebuild_results;
  std::vector<CheckResult> postbuild_results;
  PipelineVerdict verdict = PipelineVerdict::Success;
  std::uint64_t cpu_proxy = 0;
};

/// Number of results whose status is not Skipped.
std::uint64_t count_executed(const PipelineResult& r);

// ---------------------------------------------------------------------------
// Tasks

struct PrTask {
  TaskId task_id = 0;
  std::string repo_id;
  std::uint64_t pr_number = 0;
  std::uint64_t generation = 1;
  std::string head_commit;
  std::string source_branch;
  std::string target_branch;
  TaskState state = TaskState::ready();
  int priority = 0;
  Nanos submitted_at = 0;
  std::optional<Nanos> started_at;
  std::optional<Nanos> finished_at;
  std::optional<std::string> workspace_path;
  std::set<pid_t> child_process_ids;
  std::optional<PipelineResult> pipeline_result;
};

}  // namespace lightci
