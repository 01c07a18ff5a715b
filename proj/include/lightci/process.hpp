#pragma once

// Child process supervision: spawn in a fresh process group, capture
// combined output, enforce a wall-clock timeout, and tear down the whole
// group (polite terminate, grace period, force kill).

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <sys/types.h>

namespace lightci {

struct SpawnSpec {
  std::vector<std::string> argv;
  std::filesystem::path cwd;
  std::vector<std::string> env;  // KEY=VALUE; replaces the inherited environment
  bool close_stdin = false;      // false: stdin reads /dev/null
};

struct SuperviseOptions {
  std::chrono::milliseconds timeout{std::chrono::seconds(600)};
  std::chrono::milliseconds kill_grace{std::chrono::seconds(5)};
  std::size_t output_limit = 64 * 1024;
  /// Polled while the child runs; true terminates the group.
  std::function<bool()> cancelled;
  /// Called with the new process group id. Returning false terminates it
  /// immediately (the owning task is already gone).
  std::function<bool(pid_t)> on_spawn;
  std::function<void(pid_t)> on_exit;
};

struct ProcessOutcome {
  enum class Kind { Exited, Signaled, TimedOut, Cancelled, SpawnFailed };
  Kind kind = Kind::SpawnFailed;
  int code = -1;  // exit status or signal number
  std::string output;
  bool output_truncated = false;
  std::int64_t duration_ms = 0;
  pid_t pid = -1;
};

ProcessOutcome run_supervised(const SpawnSpec& spec, const SuperviseOptions& opts);

/// Convenience for short helper commands (git and friends): inherits the
/// environment, no timeout beyond `timeout`.
ProcessOutcome run_command(const std::vector<std::string>& argv,
                           const std::filesystem::path& cwd = {},
                           std::chrono::milliseconds timeout = std::chrono::minutes(10));

/// SIGTERM the group, wait up to `grace`, then SIGKILL. Returns once no
/// live (non-zombie) member remains or a hard bound past the kill elapses.
void terminate_group(pid_t pgid, std::chrono::milliseconds grace);

/// Process-table queries, all backed by /proc. Zombies count as absent.
bool process_alive(pid_t pid);
bool group_alive(pid_t pgid);
std::vector<pid_t> group_members(pid_t pgid);
std::uint64_t group_rss_bytes(pid_t pgid);
std::uint64_t self_rss_bytes();
std::uint64_t process_rss_bytes(pid_t pid);

std::optional<std::filesystem::path> find_on_path(const std::string& name);

/// Current environment as KEY=VALUE strings.
std::vector<std::string> inherited_environment();

/// Background escalation for terminations requested from a thread that
/// must not block (the scheduler owner). The terminate signal is sent
/// synchronously; the grace wait and force kill happen on the reaper thread.
class ProcessReaper {
 public:
  explicit ProcessReaper(std::chrono::milliseconds grace);
  ~ProcessReaper();
  ProcessReaper(const ProcessReaper&) = delete;
  ProcessReaper& operator=(const ProcessReaper&) = delete;

  void terminate(pid_t pgid);
  /// Blocks until every pending group is gone.
  void wait_idle();
  std::size_t pending() const;

 private:
  struct Entry {
    pid_t pgid;
    std::chrono::steady_clock::time_point deadline;
    bool killed = false;
  };
  void loop();

  std::chrono::milliseconds grace_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::vector<Entry> entries_;
  bool stop_ = false;
  std::thread thread_;
};

}  // namespace lightci
