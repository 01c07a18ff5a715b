#pragma once

// Append-only task lifecycle journal: one JSON object per line,
//   {"ts":..., "task_id":..., "transition":"Ready->Run", "reason":"admitted",
//    "repo":"...", "pr":..., "generation":...}
// Creation records use "None->Ready".

#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "lightci/scheduler.hpp"

namespace lightci {

struct JournalRecord {
  Nanos ts = 0;
  TaskId task_id = 0;
  std::optional<TaskState> from;
  TaskState to;
  std::string reason;
  std::string repo_id;
  std::uint64_t pr_number = 0;
  std::uint64_t generation = 0;
};

std::string format_journal_line(const TransitionRecord& rec);
JournalRecord parse_journal_line(const std::string& line);

class Journal {
 public:
  explicit Journal(std::filesystem::path path);
  ~Journal();
  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;

  /// Writes and flushes one record. Thread-safe.
  void append(const TransitionRecord& rec);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
  std::FILE* file_ = nullptr;
};

std::vector<JournalRecord> read_journal(const std::filesystem::path& path);

struct JournalCounters {
  std::uint64_t enqueued = 0;
  std::uint64_t passed = 0;
  std::uint64_t failed = 0;
  std::uint64_t killed = 0;
  std::uint64_t live = 0;
};

struct ReplayReport {
  std::vector<std::string> violations;  // empty when every path is legal
  std::map<TaskId, TaskState> final_states;
  JournalCounters counters;
};

/// Replays each task's transition sequence through validate_transition.
ReplayReport replay_journal(const std::vector<JournalRecord>& records);

}  // namespace lightci
