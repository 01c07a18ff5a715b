#pragma once

// Service configuration: a JSON document, validated on load.
// The schema is documented in docs/config.schema.json.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace lightci {

struct RepoEntry {
  std::string repo_id;
  std::string clone_url;
  std::string default_branch = "main";

  bool operator==(const RepoEntry&) const = default;
};

struct Thresholds {
  std::uint64_t file_size_limit_bytes = 5'242'880;
  std::vector<std::string> hardcoded_path_patterns{"/home/", "/root/"};
  std::int64_t timestamp_skew_seconds = 86'400;
  std::vector<std::string> executable_allowlist{".sh", ".py", ".pl"};
  std::optional<std::uint64_t> sloc_max;

  bool operator==(const Thresholds&) const = default;
};

/// Command line of an external analysis tool. "{files}" in argv expands to
/// the changed file list.
struct ToolSpec {
  std::string name;
  std::vector<std::string> argv;
  std::vector<int> pass_exit_codes{0};
  std::vector<std::string> extensions;  // empty: every changed file

  bool operator==(const ToolSpec&) const = default;
};

/// Stand-in for a platform package build.
struct BuildStub {
  double cost_seconds = 1.0;
  double fail_probability = 0.0;

  bool operator==(const BuildStub&) const = default;
};

struct ServiceConfig {
  std::vector<RepoEntry> repositories;
  std::uint32_t max_run_queue = 4;
  std::optional<std::string> webhook_secret;
  std::map<std::string, bool> module_toggles;
  Thresholds thresholds;
  std::uint32_t aging_window = 30;
  std::string listen_address = "127.0.0.1:8080";
  std::string code_host_base_url;
  std::filesystem::path state_dir = "state";

  // Operational knobs with documented defaults.
  std::optional<std::uint32_t> wait_queue_capacity;
  std::optional<std::string> admin_token;
  std::optional<std::string> code_host_token;
  std::filesystem::path plugins_dir;  // empty: <state_dir>/plugins
  std::uint32_t default_timeout_seconds = 600;
  std::map<std::string, std::uint32_t> plugin_timeouts;
  double kill_grace_seconds = 5.0;
  double shutdown_grace_seconds = 10.0;
  double lock_timeout_seconds = 120.0;
  std::uint64_t memory_budget_bytes = 0;  // 0 disables the pressure guard
  std::uint32_t http_retry_base_ms = 200;
  std::map<std::string, ToolSpec> tools;
  std::map<std::string, BuildStub> build_stubs;

  std::filesystem::path effective_plugins_dir() const {
    return plugins_dir.empty() ? state_dir / "plugins" : plugins_dir;
  }
  const RepoEntry* find_repo(const std::string& repo_id) const;

  bool operator==(const ServiceConfig&) const = default;
};

/// Parses and validates. Throws ParseError or ValidationError (field path
/// in ValidationError::field()).
ServiceConfig parse_config(const nlohmann::json& doc);
ServiceConfig parse_config_text(const std::string& text);
ServiceConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const ServiceConfig& cfg);
std::string serialize_config(const ServiceConfig& cfg);

/// "host:port" split; throws ValidationError on malformed input.
std::pair<std::string, int> split_listen_address(const std::string& addr);

}  // namespace lightci
