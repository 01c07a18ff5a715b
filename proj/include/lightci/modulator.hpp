#pragma once

// Plugin store and orchestration: built-in and external check modules in
// three maturity tiers, execution plans, the code-host Comment/Report
// client, and aging-test bookkeeping for staging plugins.
//
// External plugins are discovered from <root>/{base,good,staging}/<dir>/plugin.json:
//   {"name": "todo", "group": "pre", "timeout_seconds": 60, "exec": "run.sh"}
// Optional keys: "order_index", "enabled".

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "lightci/config.hpp"
#include "lightci/model.hpp"

namespace lightci {

class DuplicateName : public Error {
 public:
  explicit DuplicateName(const std::string& name) : Error("duplicate plugin name '" + name + "'") {}
};
class ManifestError : public Error {
 public:
  using Error::Error;
};
class UnknownPlugin : public Error {
 public:
  explicit UnknownPlugin(const std::string& name) : Error("unknown plugin '" + name + "'") {}
};
class NotStaging : public Error {
 public:
  explicit NotStaging(const std::string& name) : Error("plugin '" + name + "' is not in the staging tier") {}
};

/// How a built-in module is carried out.
enum class BuiltinRole { NativeCheck, ToolWrapper, BuildStub };

struct BuiltinModule {
  int number;  // position in the standard module table, used as order_index
  std::string_view name;
  Group group;
  BuiltinRole role;
};

/// The twenty standard modules, in table order.
const std::vector<BuiltinModule>& builtin_modules();
const BuiltinModule* find_builtin(std::string_view name);

class PluginStore {
 public:
  PluginStore() = default;
  explicit PluginStore(std::vector<PluginDescriptor> plugins);

  /// Base, then Good, then Staging; ascending order_index within a tier.
  const std::vector<PluginDescriptor>& plugins() const { return plugins_; }
  const PluginDescriptor* find(std::string_view name) const;

 private:
  std::vector<PluginDescriptor> plugins_;
};

/// Registers built-ins, discovers external manifests under `root`, applies
/// toggles and timeout overrides. Unknown toggle names are a ValidationError.
PluginStore load_store(const std::filesystem::path& root, const ServiceConfig& config);

/// Enabled descriptors of one group, in store order.
std::vector<PluginDescriptor> execution_plan(const PluginStore& store, Group group);

// ---------------------------------------------------------------------------

class CommentFailed : public Error {
 public:
  using Error::Error;
};
class ReportFailed : public Error {
 public:
  using Error::Error;
};

/// Commit status state for a finished check: Pass/Skipped -> success,
/// Fail -> failure, TimedOut/Crashed -> error. Advisory (staging) failures
/// are reported as success with an "advisory" description.
std::string_view commit_status_state(const CheckResult& r);

/// GitHub-compatible REST client:
///   POST /repos/{repo}/issues/{n}/comments   {"body": ...}
///   POST /repos/{repo}/statuses/{sha}        {"state","context","description","target_url"}
/// Each call is retried up to three times with exponential backoff on 5xx
/// or connection failure.
class CodeHostClient {
 public:
  CodeHostClient(std::string base_url, std::optional<std::string> token = {},
                 std::chrono::milliseconds retry_base = std::chrono::milliseconds(200),
                 int max_retries = 3);

  void comment(const std::string& repo_id, std::uint64_t pr_number, const std::string& body);
  void report(const std::string& repo_id, const std::string& head_commit,
              const std::string& plugin_name, std::string_view state,
              const std::string& description = {}, const std::string& detail_url = {});

  std::uint64_t requests_sent() const { return requests_.load(); }
  bool configured() const { return !base_url_.empty(); }

 private:
  /// Returns the final HTTP status, or -1 when every attempt failed to connect.
  int post_with_retry(const std::string& path, const std::string& body);

  std::string base_url_;
  std::string host_part_;
  std::string path_prefix_;
  std::optional<std::string> token_;
  std::chrono::milliseconds retry_base_;
  int max_retries_;
  std::atomic<std::uint64_t> requests_{0};
};

// ---------------------------------------------------------------------------

struct AgingRecord {
  std::string plugin_name;
  std::uint64_t consecutive_clean_runs = 0;
  std::optional<std::int64_t> last_failure_at;  // unix seconds
};

/// Consecutive clean-run counters per plugin, optionally persisted as JSON.
class AgingTracker {
 public:
  AgingTracker(const PluginStore& store, std::uint32_t aging_window,
               std::optional<std::filesystem::path> persist_path = {});

  /// Pass increments; Fail/Crashed/TimedOut reset to zero; Skipped leaves
  /// the counter unchanged.
  AgingRecord record_aging(const std::string& plugin_name, const CheckResult& result);
  bool promotion_eligible(const std::string& plugin_name) const;
  AgingRecord get(const std::string& plugin_name) const;

 private:
  void save_locked() const;
  void load();

  std::map<std::string, Tier> tiers_;
  std::uint32_t window_;
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mu_;
  std::map<std::string, AgingRecord> records_;
};

}  // namespace lightci
