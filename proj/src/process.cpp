#include "lightci/process.hpp"

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace lightci {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using std::chrono::milliseconds;

namespace {

struct ProcStat {
  pid_t pid = 0;
  char state = '?';
  pid_t ppid = 0;
  pid_t pgrp = 0;
  std::uint64_t rss_pages = 0;
};

std::optional<ProcStat> read_stat(pid_t pid) {
  std::ifstream in("/proc/" + std::to_string(pid) + "/stat");
  if (!in) return std::nullopt;
  std::string line;
  std::getline(in, line);
  // comm may contain spaces and parentheses; fields resume after the last ')'.
  auto close = line.rfind(')');
  if (close == std::string::npos) return std::nullopt;
  std::istringstream rest(line.substr(close + 2));
  ProcStat st;
  st.pid = pid;
  rest >> st.state >> st.ppid >> st.pgrp;
  // Skip to field 24 (rss): we are at field 5 after pgrp.
  std::string skip;
  for (int field = 6; field < 24 && rest; ++field) rest >> skip;
  rest >> st.rss_pages;
  return st;
}

std::vector<ProcStat> scan_proc() {
  std::vector<ProcStat> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator("/proc", ec)) {
    const auto name = entry.path().filename().string();
    if (name.empty() || !std::all_of(name.begin(), name.end(), ::isdigit)) continue;
    if (auto st = read_stat(static_cast<pid_t>(std::stol(name)))) out.push_back(*st);
  }
  return out;
}

bool is_live(const ProcStat& st) { return st.state != 'Z' && st.state != 'X'; }

void set_nonblocking(int fd) { ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK); }

std::int64_t elapsed_ms(Clock::time_point start) {
  return std::chrono::duration_cast<milliseconds>(Clock::now() - start).count();
}

class Pipe {
 public:
  Pipe() {
    if (::pipe2(fds_, O_CLOEXEC) != 0) fds_[0] = fds_[1] = -1;
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  Pipe(const Pipe&) = delete;
  Pipe& operator=(const Pipe&) = delete;
  bool ok() const { return fds_[0] >= 0; }
  int read_end() const { return fds_[0]; }
  int write_end() const { return fds_[1]; }
  void close_read() {
    if (fds_[0] >= 0) ::close(fds_[0]);
    fds_[0] = -1;
  }
  void close_write() {
    if (fds_[1] >= 0) ::close(fds_[1]);
    fds_[1] = -1;
  }

 private:
  int fds_[2];
};

class OutputSink {
 public:
  explicit OutputSink(std::size_t limit) : limit_(limit) {}
  // Returns false on EOF.
  bool drain(int fd) {
    char buf[8192];
    for (;;) {
      ssize_t n = ::read(fd, buf, sizeof buf);
      if (n > 0) {
        std::size_t room = limit_ > text_.size() ? limit_ - text_.size() : 0;
        if (static_cast<std::size_t>(n) > room) truncated_ = true;
        text_.append(buf, std::min<std::size_t>(room, static_cast<std::size_t>(n)));
        continue;
      }
      if (n == 0) return false;
      if (errno == EINTR) continue;
      return true;  // EAGAIN
    }
  }
  std::string take() { return std::move(text_); }
  bool truncated() const { return truncated_; }

 private:
  std::size_t limit_;
  std::string text_;
  bool truncated_ = false;
};

}  // namespace

// ---------------------------------------------------------------------------

bool process_alive(pid_t pid) {
  auto st = read_stat(pid);
  return st && is_live(*st);
}

std::vector<pid_t> group_members(pid_t pgid) {
  std::vector<pid_t> out;
  for (const auto& st : scan_proc())
    if (st.pgrp == pgid && is_live(st)) out.push_back(st.pid);
  return out;
}

bool group_alive(pid_t pgid) { return !group_members(pgid).empty(); }

std::uint64_t group_rss_bytes(pid_t pgid) {
  const auto page = static_cast<std::uint64_t>(::sysconf(_SC_PAGESIZE));
  std::uint64_t total = 0;
  for (const auto& st : scan_proc())
    if (st.pgrp == pgid && is_live(st)) total += st.rss_pages * page;
  return total;
}

std::uint64_t process_rss_bytes(pid_t pid) {
  std::ifstream in("/proc/" + std::to_string(pid) + "/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmRSS:", 0) == 0) {
      std::istringstream fields(line.substr(6));
      std::uint64_t kb = 0;
      fields >> kb;
      return kb * 1024;
    }
  }
  return 0;
}

std::uint64_t self_rss_bytes() { return process_rss_bytes(::getpid()); }

void terminate_group(pid_t pgid, milliseconds grace) {
  if (pgid <= 1) return;
  if (::kill(-pgid, SIGTERM) != 0 && errno == ESRCH) return;
  const auto deadline = Clock::now() + grace;
  while (Clock::now() < deadline) {
    if (!group_alive(pgid)) return;
    std::this_thread::sleep_for(milliseconds(20));
  }
  ::kill(-pgid, SIGKILL);
  const auto hard = Clock::now() + std::chrono::seconds(2);
  while (Clock::now() < hard && group_alive(pgid)) std::this_thread::sleep_for(milliseconds(10));
}

std::optional<fs::path> find_on_path(const std::string& name) {
  if (name.find('/') != std::string::npos) {
    if (::access(name.c_str(), X_OK) == 0) return fs::path(name);
    return std::nullopt;
  }
  const char* path = std::getenv("PATH");
  if (!path) return std::nullopt;
  std::istringstream dirs(path);
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    if (dir.empty()) continue;
    fs::path candidate = fs::path(dir) / name;
    if (::access(candidate.c_str(), X_OK) == 0 && fs::is_regular_file(candidate)) return candidate;
  }
  return std::nullopt;
}

std::vector<std::string> inherited_environment() {
  std::vector<std::string> env;
  for (char** e = environ; e && *e; ++e) env.emplace_back(*e);
  return env;
}

ProcessOutcome run_supervised(const SpawnSpec& spec, const SuperviseOptions& opts) {
  ProcessOutcome out;
  const auto start = Clock::now();
  if (spec.argv.empty()) {
    out.output = "empty argv";
    return out;
  }
  Pipe pipe;
  if (!pipe.ok()) {
    out.output = std::string("pipe: ") + std::strerror(errno);
    return out;
  }

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  if (spec.close_stdin) posix_spawn_file_actions_addclose(&actions, 0);
  else posix_spawn_file_actions_addopen(&actions, 0, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_adddup2(&actions, pipe.write_end(), 1);
  posix_spawn_file_actions_adddup2(&actions, pipe.write_end(), 2);
  if (!spec.cwd.empty()) posix_spawn_file_actions_addchdir_np(&actions, spec.cwd.c_str());

  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setpgroup(&attr, 0);
  sigset_t empty, defaults;
  sigemptyset(&empty);
  sigemptyset(&defaults);
  sigaddset(&defaults, SIGPIPE);
  sigaddset(&defaults, SIGTERM);
  sigaddset(&defaults, SIGINT);
  sigaddset(&defaults, SIGCHLD);
  posix_spawnattr_setsigmask(&attr, &empty);
  posix_spawnattr_setsigdefault(&attr, &defaults);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP | POSIX_SPAWN_SETSIGMASK |
                                      POSIX_SPAWN_SETSIGDEF);

  std::vector<char*> argv;
  for (const auto& a : spec.argv) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  std::vector<char*> envp;
  for (const auto& e : spec.env) envp.push_back(const_cast<char*>(e.c_str()));
  envp.push_back(nullptr);

  pid_t pid = -1;
  int rc = ::posix_spawnp(&pid, argv[0], &actions, &attr, argv.data(), envp.data());
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  pipe.close_write();
  if (rc != 0) {
    out.output = "spawn " + spec.argv[0] + ": " + std::strerror(rc);
    out.duration_ms = elapsed_ms(start);
    return out;
  }
  out.pid = pid;

  bool keep = true;
  if (opts.on_spawn) keep = opts.on_spawn(pid);

  set_nonblocking(pipe.read_end());
  OutputSink sink(opts.output_limit);
  bool open = true;
  int status = 0;
  bool reaped = false;
  std::optional<ProcessOutcome::Kind> forced;

  while (!reaped) {
    if (!keep || (opts.cancelled && opts.cancelled())) {
      forced = ProcessOutcome::Kind::Cancelled;
    } else if (Clock::now() - start >= opts.timeout) {
      forced = ProcessOutcome::Kind::TimedOut;
    }
    if (forced) {
      terminate_group(pid, opts.kill_grace);
      ::waitpid(pid, &status, 0);
      reaped = true;
      break;
    }
    if (open) {
      pollfd pfd{pipe.read_end(), POLLIN, 0};
      int pr = ::poll(&pfd, 1, 20);
      if (pr > 0) open = sink.drain(pipe.read_end());
    } else {
      std::this_thread::sleep_for(milliseconds(10));
    }
    pid_t w = ::waitpid(pid, &status, WNOHANG);
    if (w == pid) reaped = true;
  }
  // Leftover members (backgrounded grandchildren) die with their leader.
  if (group_alive(pid)) terminate_group(pid, milliseconds(0));
  if (open) sink.drain(pipe.read_end());
  if (opts.on_exit) opts.on_exit(pid);

  out.duration_ms = elapsed_ms(start);
  out.output = sink.take();
  out.output_truncated = sink.truncated();
  if (forced) {
    out.kind = *forced;
    out.code = WIFSIGNALED(status) ? WTERMSIG(status) : -1;
  } else if (WIFEXITED(status)) {
    out.kind = ProcessOutcome::Kind::Exited;
    out.code = WEXITSTATUS(status);
  } else {
    out.kind = ProcessOutcome::Kind::Signaled;
    out.code = WIFSIGNALED(status) ? WTERMSIG(status) : -1;
  }
  return out;
}

ProcessOutcome run_command(const std::vector<std::string>& argv, const fs::path& cwd,
                           milliseconds timeout) {
  SpawnSpec spec{argv, cwd, inherited_environment()};
  SuperviseOptions opts;
  opts.timeout = timeout;
  opts.kill_grace = milliseconds(1000);
  opts.output_limit = 16 * 1024 * 1024;
  return run_supervised(spec, opts);
}

// ---------------------------------------------------------------------------

ProcessReaper::ProcessReaper(milliseconds grace) : grace_(grace), thread_([this] { loop(); }) {}

ProcessReaper::~ProcessReaper() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  thread_.join();
}

void ProcessReaper::terminate(pid_t pgid) {
  if (pgid <= 1) return;
  ::kill(-pgid, SIGTERM);
  {
    std::lock_guard lock(mu_);
    entries_.push_back({pgid, Clock::now() + grace_});
  }
  cv_.notify_all();
}

std::size_t ProcessReaper::pending() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void ProcessReaper::wait_idle() {
  std::unique_lock lock(mu_);
  idle_cv_.wait(lock, [this] { return entries_.empty(); });
}

void ProcessReaper::loop() {
  std::unique_lock lock(mu_);
  for (;;) {
    cv_.wait_for(lock, milliseconds(25), [this] { return stop_ || !entries_.empty(); });
    if (entries_.empty()) {
      if (stop_) return;
      continue;
    }
    auto batch = entries_;
    lock.unlock();
    std::vector<pid_t> done;
    const auto now = Clock::now();
    for (auto& e : batch) {
      if (!group_alive(e.pgid)) {
        done.push_back(e.pgid);
      } else if (now >= e.deadline) {
        ::kill(-e.pgid, SIGKILL);
        if (now >= e.deadline + std::chrono::seconds(2)) done.push_back(e.pgid);
      }
    }
    lock.lock();
    std::erase_if(entries_, [&](const Entry& e) {
      return std::find(done.begin(), done.end(), e.pgid) != done.end();
    });
    if (entries_.empty()) idle_cv_.notify_all();
  }
}

}  // namespace lightci
