#include "test_support.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "lightci/modulator.hpp"
#include "lightci/process.hpp"

namespace testsupport {

TempDir::TempDir(const std::string& tag) {
  std::string tmpl = (fs::temp_directory_path() / ("lightci-" + tag + "-XXXXXX")).string();
  if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_file(const fs::path& p, const std::string& content, bool executable) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << content;
  out.close();
  if (executable)
    fs::permissions(p, fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec,
                    fs::perm_options::add);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sh(const std::string& cmd, const fs::path& cwd) {
  auto out = lightci::run_command({"/bin/sh", "-c", cmd}, cwd, std::chrono::seconds(60));
  if (out.kind != lightci::ProcessOutcome::Kind::Exited || out.code != 0)
    throw std::runtime_error("command failed (" + std::to_string(out.code) + "): " + cmd + "\n" + out.output);
  return out.output;
}

namespace {
const char* kGitIdentity =
    "git -c user.name=Dev -c user.email=dev@example.com -c commit.gpgsign=false ";
}

FixtureRepo::FixtureRepo(const fs::path& dir) : dir_(dir) {
  fs::create_directories(dir_);
  sh("git init -q -b main . 2>/dev/null || (git init -q . && git checkout -q -b main)", dir_);
  write_file(dir_ / "README.md", "fixture\n");
  write_file(dir_ / "src/main.c", "int main(void) {\n  return 0;\n}\n");
  sh("git add -A && " + std::string(kGitIdentity) +
         "commit -q -m 'initial' -m 'Signed-off-by: Dev <dev@example.com>'",
     dir_);
}

std::string FixtureRepo::commit_on_branch(const std::string& branch,
                                          const std::vector<std::pair<std::string, std::string>>& files,
                                          const std::string& message) {
  const bool exists = sh("git branch --list " + branch, dir_).find(branch) != std::string::npos;
  sh(exists ? "git checkout -q " + branch : "git checkout -q -b " + branch + " main", dir_);
  for (const auto& [path, content] : files) write_file(dir_ / path, content);
  write_file(dir_ / ".msg", message + "\n");
  sh("git add -A -- . ':!.msg' && " + std::string(kGitIdentity) + "commit -q -F .msg && rm .msg", dir_);
  const std::string sha = head(branch);
  sh("git checkout -q main", dir_);
  return sha;
}

std::string FixtureRepo::head(const std::string& ref) const {
  std::string out = sh("git rev-parse " + ref, dir_);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out;
}

bool wait_until(const std::function<bool()>& pred, std::chrono::milliseconds timeout,
                std::chrono::milliseconds step) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (!pred()) {
    if (std::chrono::steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(step);
  }
  return true;
}

std::vector<int> pids_with_marker(const std::string& marker) {
  std::vector<int> out;
  for (const auto& e : fs::directory_iterator("/proc")) {
    const std::string name = e.path().filename().string();
    if (name.empty() || name.find_first_not_of("0123456789") != std::string::npos) continue;
    std::string cmdline = read_file(e.path() / "cmdline");
    for (auto& c : cmdline)
      if (c == '\0') c = ' ';
    if (cmdline.find(marker) == std::string::npos) continue;
    if (cmdline.find("pids_with_marker") != std::string::npos) continue;
    const int pid = std::stoi(name);
    if (lightci::process_alive(pid)) out.push_back(pid);
  }
  return out;
}

std::string sha_of(std::uint64_t n) {
  char buf[41];
  std::snprintf(buf, sizeof buf, "%040llx", static_cast<unsigned long long>(n));
  return buf;
}

lightci::PrEvent make_event(const std::string& repo, std::uint64_t pr, lightci::PrAction action,
                            const std::string& sha, const std::string& clone_url) {
  lightci::PrEvent ev;
  ev.repo_id = repo;
  ev.pr_number = pr;
  ev.action = action;
  ev.head_commit = sha;
  ev.source_branch = "pr-" + std::to_string(pr);
  ev.target_branch = "main";
  ev.clone_url = clone_url;
  return ev;
}

nlohmann::json pr_payload(const std::string& action, std::uint64_t number, const std::string& sha,
                          const std::string& repo, const std::string& clone_url) {
  return {{"action", action},
          {"number", number},
          {"pull_request",
           {{"head", {{"sha", sha}, {"ref", "pr-" + std::to_string(number)}}}, {"base", {{"ref", "main"}}}}},
          {"repository", {{"full_name", repo}, {"clone_url", clone_url}}}};
}

MockCodeHost::MockCodeHost() : server_(std::make_unique<httplib::Server>()) {
  server_->Post(R"(/repos/.*)", [this](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lk(mu_);
    Request r{req.path, nlohmann::json::parse(req.body, nullptr, false), req.get_header_value("Authorization")};
    requests_.push_back(r);
    if (fail_remaining_ > 0) {
      --fail_remaining_;
      res.status = fail_status_;
      res.set_content("{\"message\":\"injected\"}", "application/json");
      return;
    }
    res.status = 201;
    res.set_content("{}", "application/json");
  });
  port_ = server_->bind_to_any_port("127.0.0.1");
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

MockCodeHost::~MockCodeHost() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockCodeHost::base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

std::vector<MockCodeHost::Request> MockCodeHost::requests() const {
  std::lock_guard lk(mu_);
  return requests_;
}

void MockCodeHost::fail_next(int count, int status) {
  std::lock_guard lk(mu_);
  fail_remaining_ = count;
  fail_status_ = status;
}

lightci::ServiceConfig quiet_config(const fs::path& state_dir) {
  lightci::ServiceConfig cfg;
  cfg.state_dir = state_dir;
  for (const auto& m : lightci::builtin_modules()) cfg.module_toggles[std::string(m.name)] = false;
  cfg.kill_grace_seconds = 1;
  cfg.shutdown_grace_seconds = 5;
  return cfg;
}

fs::path add_plugin(const fs::path& root, const std::string& tier, const std::string& name,
                    const std::string& group, const std::string& script, int timeout_seconds,
                    std::optional<int> order_index) {
  const fs::path dir = root / tier / name;
  write_file(dir / "run.sh", "#!/bin/sh\n" + script + "\n", true);
  nlohmann::json manifest{{"name", name}, {"group", group}, {"timeout_seconds", timeout_seconds}, {"exec", "run.sh"}};
  if (order_index) manifest["order_index"] = *order_index;
  write_file(dir / "plugin.json", manifest.dump(2));
  return dir;
}

}  // namespace testsupport
