#include "lightci/source_manager.hpp"

#include <cctype>
#include <thread>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include "lightci/process.hpp"

namespace lightci {

namespace fs = std::filesystem;
using std::chrono::milliseconds;

GitResult run_git(const std::vector<std::string>& args, const fs::path& cwd) {
  SpawnSpec spec;
  spec.argv = {"git"};
  spec.argv.insert(spec.argv.end(), args.begin(), args.end());
  spec.cwd = cwd;
  spec.env = inherited_environment();
  spec.env.push_back("GIT_TERMINAL_PROMPT=0");
  spec.env.push_back("GIT_ASKPASS=true");
  SuperviseOptions opts;
  opts.timeout = std::chrono::minutes(30);
  opts.kill_grace = milliseconds(1000);
  opts.output_limit = 16 * 1024 * 1024;
  auto out = run_supervised(spec, opts);
  if (out.kind == ProcessOutcome::Kind::SpawnFailed) throw Error("git: " + out.output);
  return {out.kind == ProcessOutcome::Kind::Exited ? out.code : -1, std::move(out.output)};
}

std::uint64_t directory_bytes(const fs::path& dir) {
  std::uint64_t total = 0;
  std::error_code ec;
  if (!fs::exists(dir, ec)) return 0;
  for (auto it = fs::recursive_directory_iterator(dir, fs::directory_options::skip_permission_denied, ec);
       it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) break;
    if (it->is_symlink(ec)) continue;
    if (it->is_regular_file(ec)) total += it->file_size(ec);
  }
  return total;
}

namespace {

std::string sanitize(const std::string& repo_id) {
  std::string out;
  for (char c : repo_id) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') out.push_back(c);
    else if (c == '/') out += "__";
    else out.push_back('_');
  }
  return out;
}

/// Exclusive flock held for the object's lifetime.
class FileLock {
 public:
  explicit FileLock(const fs::path& path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("cannot open lock file " + path.string());
  }
  ~FileLock() {
    if (fd_ >= 0) ::close(fd_);  // closing drops the flock
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

  bool try_lock() { return ::flock(fd_, LOCK_EX | LOCK_NB) == 0; }

  void lock(milliseconds timeout, const LockWaitHook& on_wait, const std::string& what) {
    if (try_lock()) return;
    if (on_wait) on_wait(true);
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (!try_lock()) {
      if (std::chrono::steady_clock::now() >= deadline) {
        if (on_wait) on_wait(false);
        throw LockTimeout("lock on " + what + " held longer than " +
                          std::to_string(timeout.count()) + " ms");
      }
      std::this_thread::sleep_for(milliseconds(10));
    }
    if (on_wait) on_wait(false);
  }

 private:
  int fd_ = -1;
};

const std::vector<std::string> kFetchRefspecs{"+refs/heads/*:refs/heads/*",
                                              "+refs/pull/*/head:refs/pull/*/head"};

}  // namespace

SourceManager::SourceManager(fs::path state_dir, std::vector<RepoEntry> repos, milliseconds lock_timeout)
    : state_dir_(std::move(state_dir)), repos_(std::move(repos)), lock_timeout_(lock_timeout) {
  fs::create_directories(state_dir_ / "clones");
  fs::create_directories(state_dir_ / "workspaces");
}

fs::path SourceManager::clone_dir(const std::string& repo_id) const {
  return state_dir_ / "clones" / sanitize(repo_id);
}

fs::path SourceManager::workspace_dir(TaskId task_id) const {
  return state_dir_ / "workspaces" / std::to_string(task_id);
}

fs::path SourceManager::lock_path(const std::string& repo_id) const {
  return clone_dir(repo_id) / "lightci.lock";
}

SourceManager::RepoState& SourceManager::state(const std::string& repo_id) const {
  std::lock_guard lock(mu_);
  auto& slot = states_[repo_id];
  if (!slot) slot = std::make_unique<RepoState>();
  return *slot;
}

const RepoEntry& SourceManager::repo(const std::string& repo_id) const {
  for (const auto& r : repos_)
    if (r.repo_id == repo_id) return r;
  throw CloneFailed("repository '" + repo_id + "' is not configured");
}

std::size_t SourceManager::full_clone_count(const std::string& repo_id) const {
  auto& st = state(repo_id);
  std::lock_guard lock(st.mu);
  return st.full_clones;
}

std::size_t SourceManager::fetch_count(const std::string& repo_id) const {
  auto& st = state(repo_id);
  std::lock_guard lock(st.mu);
  return st.fetches;
}

void SourceManager::clone_if_missing(const RepoEntry& r) {
  auto& st = state(r.repo_id);
  std::lock_guard lock(st.mu);
  const fs::path dir = clone_dir(r.repo_id);
  if (fs::exists(dir / "HEAD")) return;
  const fs::path tmp = dir.string() + ".partial";
  fs::remove_all(tmp);
  auto res = run_git({"clone", "--bare", "--quiet", r.clone_url, tmp.string()});
  if (!res.ok()) {
    fs::remove_all(tmp);
    throw CloneFailed("git clone " + r.clone_url + " failed: " + res.output);
  }
  fs::rename(tmp, dir);
  ++st.full_clones;
}

void SourceManager::fetch(const RepoEntry& r) {
  std::vector<std::string> args{"fetch", "--quiet", "--prune", r.clone_url};
  args.insert(args.end(), kFetchRefspecs.begin(), kFetchRefspecs.end());
  auto res = run_git(args, clone_dir(r.repo_id));
  if (!res.ok()) throw CloneFailed("git fetch " + r.clone_url + " failed: " + res.output);
  auto& st = state(r.repo_id);
  std::lock_guard lock(st.mu);
  ++st.fetches;
}

bool SourceManager::has_commit(const std::string& repo_id, const std::string& sha) const {
  return run_git({"cat-file", "-e", sha + "^{commit}"}, clone_dir(repo_id)).ok();
}

fs::path SourceManager::ensure_base_clone(const RepoEntry& r) {
  const bool existed = fs::exists(clone_dir(r.repo_id) / "HEAD");
  clone_if_missing(r);
  if (existed) {
    FileLock lock(lock_path(r.repo_id));
    lock.lock(lock_timeout_, {}, r.repo_id);
    fetch(r);
  }
  return clone_dir(r.repo_id);
}

Workspace SourceManager::derive_workspace(const PrTask& task, const LockWaitHook& on_wait) {
  const RepoEntry& r = repo(task.repo_id);
  clone_if_missing(r);
  const fs::path ws = workspace_dir(task.task_id);

  FileLock lock(lock_path(r.repo_id));
  lock.lock(lock_timeout_, on_wait, r.repo_id);

  if (!has_commit(r.repo_id, task.head_commit)) {
    fetch(r);
    if (!has_commit(r.repo_id, task.head_commit)) {
      // Some hosts serve unadvertised commits by id.
      run_git({"fetch", "--quiet", r.clone_url, task.head_commit}, clone_dir(r.repo_id));
      if (!has_commit(r.repo_id, task.head_commit))
        throw UnknownCommit("commit " + task.head_commit + " not found in " + r.repo_id);
    }
  }
  if (fs::exists(ws)) throw Error("workspace path already in use: " + ws.string());
  auto res = run_git({"worktree", "add", "--detach", "--quiet", fs::absolute(ws).string(),
                      task.head_commit},
                     clone_dir(r.repo_id));
  if (!res.ok()) throw Error("git worktree add failed: " + res.output);
  if (fs::exists(ws / ".gitmodules"))
    run_git({"submodule", "update", "--init", "--quiet"}, ws);

  {
    std::lock_guard g(mu_);
    workspace_repo_[task.task_id] = r.repo_id;
  }
  Workspace w;
  w.task_id = task.task_id;
  w.repo_id = r.repo_id;
  w.path = ws;
  w.head_commit = task.head_commit;
  w.derived_at = MonotonicClock{}.now();
  return w;
}

void SourceManager::release_workspace(TaskId task_id) {
  const fs::path ws = workspace_dir(task_id);
  std::string repo_id;
  {
    std::lock_guard g(mu_);
    auto it = workspace_repo_.find(task_id);
    if (it != workspace_repo_.end()) {
      repo_id = it->second;
      workspace_repo_.erase(it);
    }
  }
  if (repo_id.empty()) {
    std::error_code ec;
    fs::remove_all(ws, ec);
    return;
  }
  FileLock lock(lock_path(repo_id));
  lock.lock(lock_timeout_, {}, repo_id);
  if (fs::exists(ws))
    run_git({"worktree", "remove", "--force", fs::absolute(ws).string()}, clone_dir(repo_id));
  std::error_code ec;
  fs::remove_all(ws, ec);
  run_git({"worktree", "prune"}, clone_dir(repo_id));
}

Workspace ScratchWorkspaces::derive_workspace(const PrTask& task, const LockWaitHook&) {
  Workspace w;
  w.task_id = task.task_id;
  w.repo_id = task.repo_id;
  w.path = state_dir_ / "workspaces" / std::to_string(task.task_id);
  w.head_commit = task.head_commit;
  w.derived_at = MonotonicClock{}.now();
  fs::create_directories(w.path);
  return w;
}

void ScratchWorkspaces::release_workspace(TaskId task_id) {
  std::error_code ec;
  fs::remove_all(state_dir_ / "workspaces" / std::to_string(task_id), ec);
}

}  // namespace lightci
