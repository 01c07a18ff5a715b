#pragma once

// Unified source code manager: one bare base clone per repository and a
// linked git worktree per task, sharing the clone's object store.
//
// Layout:  <state_dir>/clones/<repo>/          bare clone (+ lightci.lock)
//          <state_dir>/workspaces/<task_id>/   linked worktree

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "lightci/config.hpp"
#include "lightci/model.hpp"

namespace lightci {

class CloneFailed : public Error {
 public:
  using Error::Error;
};
class UnknownCommit : public Error {
 public:
  using Error::Error;
};
class LockTimeout : public Error {
 public:
  using Error::Error;
};

struct Workspace {
  TaskId task_id = 0;
  std::string repo_id;
  std::filesystem::path path;
  std::string head_commit;
  Nanos derived_at = 0;
};

/// Called with true when a task starts waiting on the repository lock and
/// with false once it holds the lock.
using LockWaitHook = std::function<void(bool waiting)>;

class WorkspaceProvider {
 public:
  virtual ~WorkspaceProvider() = default;
  virtual Workspace derive_workspace(const PrTask& task, const LockWaitHook& on_wait) = 0;
  virtual void release_workspace(TaskId task_id) = 0;
};

class SourceManager final : public WorkspaceProvider {
 public:
  SourceManager(std::filesystem::path state_dir, std::vector<RepoEntry> repos,
                std::chrono::milliseconds lock_timeout = std::chrono::seconds(120));

  /// First call clones; later calls fetch incrementally.
  std::filesystem::path ensure_base_clone(const RepoEntry& repo);
  Workspace derive_workspace(const PrTask& task, const LockWaitHook& on_wait = {}) override;
  void release_workspace(TaskId task_id) override;

  std::filesystem::path clone_dir(const std::string& repo_id) const;
  std::filesystem::path workspace_dir(TaskId task_id) const;
  std::filesystem::path lock_path(const std::string& repo_id) const;
  std::size_t full_clone_count(const std::string& repo_id) const;
  std::size_t fetch_count(const std::string& repo_id) const;

 private:
  struct RepoState {
    std::mutex mu;  // serializes clone creation within the process
    std::size_t full_clones = 0;
    std::size_t fetches = 0;
  };
  RepoState& state(const std::string& repo_id) const;
  const RepoEntry& repo(const std::string& repo_id) const;
  void clone_if_missing(const RepoEntry& repo);
  void fetch(const RepoEntry& repo);
  bool has_commit(const std::string& repo_id, const std::string& sha) const;

  std::filesystem::path state_dir_;
  std::vector<RepoEntry> repos_;
  std::chrono::milliseconds lock_timeout_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::unique_ptr<RepoState>> states_;
  std::map<TaskId, std::string> workspace_repo_;
};

/// Empty per-task directories; stands in for git when the simulator drives
/// the real service without a repository.
class ScratchWorkspaces final : public WorkspaceProvider {
 public:
  explicit ScratchWorkspaces(std::filesystem::path state_dir) : state_dir_(std::move(state_dir)) {}
  Workspace derive_workspace(const PrTask& task, const LockWaitHook& on_wait) override;
  void release_workspace(TaskId task_id) override;

 private:
  std::filesystem::path state_dir_;
};

/// Runs git with prompts disabled. Throws Error on spawn failure only.
struct GitResult {
  int exit_code = -1;
  std::string output;
  bool ok() const { return exit_code == 0; }
};
GitResult run_git(const std::vector<std::string>& args, const std::filesystem::path& cwd = {});

/// Recursive byte count of regular files (symlinks not followed).
std::uint64_t directory_bytes(const std::filesystem::path& dir);

}  // namespace lightci
