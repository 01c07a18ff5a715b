#include "lightci/config.hpp"

#include <fstream>
#include <sstream>

#include "lightci/model.hpp"

namespace lightci {

using nlohmann::json;

const RepoEntry* ServiceConfig::find_repo(const std::string& repo_id) const {
  for (const auto& r : repositories)
    if (r.repo_id == repo_id) return &r;
  return nullptr;
}

namespace {

template <typename T>
T get_as(const json& obj, const std::string& key, const std::string& path) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(path + key, e.what());
  }
}

template <typename T>
void read_opt(const json& obj, const std::string& key, const std::string& path, T& out) {
  if (obj.contains(key) && !obj.at(key).is_null()) out = get_as<T>(obj, key, path);
}

template <typename T>
void read_opt(const json& obj, const std::string& key, const std::string& path,
              std::optional<T>& out) {
  if (obj.contains(key) && !obj.at(key).is_null()) out = get_as<T>(obj, key, path);
}

std::uint64_t read_positive(const json& obj, const std::string& key, const std::string& path,
                            std::uint64_t fallback) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) throw ValidationError(path + key, "expected an integer");
  auto n = v.get<std::int64_t>();
  if (n < 1) throw ValidationError(path + key, "must be >= 1");
  return static_cast<std::uint64_t>(n);
}

void require_object(const json& v, const std::string& path) {
  if (!v.is_object()) throw ValidationError(path, "expected an object");
}

}  // namespace

std::pair<std::string, int> split_listen_address(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0)
    throw ValidationError("listen_address", "expected host:port");
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw ValidationError("listen_address", "bad port");
  }
  if (port < 0 || port > 65535) throw ValidationError("listen_address", "port out of range");
  return {addr.substr(0, colon), port};
}

ServiceConfig parse_config(const json& doc) {
  require_object(doc, "$");
  ServiceConfig cfg;

  if (doc.contains("repositories")) {
    const json& repos = doc.at("repositories");
    if (!repos.is_array()) throw ValidationError("repositories", "expected an array");
    for (std::size_t i = 0; i < repos.size(); ++i) {
      std::string path = "repositories[" + std::to_string(i) + "].";
      require_object(repos[i], path);
      RepoEntry r;
      r.repo_id = get_as<std::string>(repos[i], "repo_id", path);
      r.clone_url = get_as<std::string>(repos[i], "clone_url", path);
      read_opt(repos[i], "default_branch", path, r.default_branch);
      if (r.repo_id.empty()) throw ValidationError(path + "repo_id", "must not be empty");
      if (cfg.find_repo(r.repo_id)) throw ValidationError(path + "repo_id", "duplicate repository");
      cfg.repositories.push_back(std::move(r));
    }
  }

  cfg.max_run_queue = static_cast<std::uint32_t>(read_positive(doc, "max_run_queue", "", 4));
  read_opt(doc, "webhook_secret", "", cfg.webhook_secret);
  if (cfg.webhook_secret && cfg.webhook_secret->empty()) cfg.webhook_secret.reset();
  read_opt(doc, "module_toggles", "", cfg.module_toggles);

  if (doc.contains("thresholds")) {
    const json& t = doc.at("thresholds");
    require_object(t, "thresholds");
    cfg.thresholds.file_size_limit_bytes =
        read_positive(t, "file_size_limit_bytes", "thresholds.", cfg.thresholds.file_size_limit_bytes);
    read_opt(t, "hardcoded_path_patterns", "thresholds.", cfg.thresholds.hardcoded_path_patterns);
    cfg.thresholds.timestamp_skew_seconds = static_cast<std::int64_t>(read_positive(
        t, "timestamp_skew_seconds", "thresholds.",
        static_cast<std::uint64_t>(cfg.thresholds.timestamp_skew_seconds)));
    read_opt(t, "executable_allowlist", "thresholds.", cfg.thresholds.executable_allowlist);
    read_opt(t, "sloc_max", "thresholds.", cfg.thresholds.sloc_max);
  }

  cfg.aging_window = static_cast<std::uint32_t>(read_positive(doc, "aging_window", "", 30));
  read_opt(doc, "listen_address", "", cfg.listen_address);
  split_listen_address(cfg.listen_address);
  read_opt(doc, "code_host_base_url", "", cfg.code_host_base_url);
  std::string state_dir = cfg.state_dir.string();
  read_opt(doc, "state_dir", "", state_dir);
  cfg.state_dir = state_dir;

  if (doc.contains("wait_queue_capacity") && !doc.at("wait_queue_capacity").is_null())
    cfg.wait_queue_capacity =
        static_cast<std::uint32_t>(read_positive(doc, "wait_queue_capacity", "", 1));
  read_opt(doc, "admin_token", "", cfg.admin_token);
  read_opt(doc, "code_host_token", "", cfg.code_host_token);
  std::string plugins_dir;
  read_opt(doc, "plugins_dir", "", plugins_dir);
  cfg.plugins_dir = plugins_dir;
  cfg.default_timeout_seconds = static_cast<std::uint32_t>(
      read_positive(doc, "default_timeout_seconds", "", cfg.default_timeout_seconds));
  if (doc.contains("plugin_timeouts")) {
    const json& pt = doc.at("plugin_timeouts");
    require_object(pt, "plugin_timeouts");
    for (const auto& [name, _] : pt.items())
      cfg.plugin_timeouts[name] =
          static_cast<std::uint32_t>(read_positive(pt, name, "plugin_timeouts.", 1));
  }
  read_opt(doc, "kill_grace_seconds", "", cfg.kill_grace_seconds);
  read_opt(doc, "shutdown_grace_seconds", "", cfg.shutdown_grace_seconds);
  read_opt(doc, "lock_timeout_seconds", "", cfg.lock_timeout_seconds);
  if (cfg.kill_grace_seconds < 0) throw ValidationError("kill_grace_seconds", "must be >= 0");
  if (cfg.shutdown_grace_seconds < 0)
    throw ValidationError("shutdown_grace_seconds", "must be >= 0");
  if (cfg.lock_timeout_seconds <= 0) throw ValidationError("lock_timeout_seconds", "must be > 0");
  read_opt(doc, "memory_budget_bytes", "", cfg.memory_budget_bytes);
  read_opt(doc, "http_retry_base_ms", "", cfg.http_retry_base_ms);

  if (doc.contains("tools")) {
    const json& tools = doc.at("tools");
    require_object(tools, "tools");
    for (const auto& [module, spec] : tools.items()) {
      std::string path = "tools." + module + ".";
      require_object(spec, path);
      ToolSpec ts;
      ts.name = get_as<std::string>(spec, "name", path);
      ts.argv = get_as<std::vector<std::string>>(spec, "argv", path);
      read_opt(spec, "pass_exit_codes", path, ts.pass_exit_codes);
      read_opt(spec, "extensions", path, ts.extensions);
      if (ts.argv.empty()) throw ValidationError(path + "argv", "must not be empty");
      cfg.tools[module] = std::move(ts);
    }
  }
  if (doc.contains("build_stubs")) {
    const json& stubs = doc.at("build_stubs");
    require_object(stubs, "build_stubs");
    for (const auto& [platform, spec] : stubs.items()) {
      std::string path = "build_stubs." + platform + ".";
      require_object(spec, path);
      BuildStub b;
      read_opt(spec, "cost_seconds", path, b.cost_seconds);
      read_opt(spec, "fail_probability", path, b.fail_probability);
      if (b.cost_seconds < 0) throw ValidationError(path + "cost_seconds", "must be >= 0");
      if (b.fail_probability < 0 || b.fail_probability > 1)
        throw ValidationError(path + "fail_probability", "must be in [0,1]");
      cfg.build_stubs[platform] = b;
    }
  }
  return cfg;
}

ServiceConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/false);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return parse_config(doc);
}

ServiceConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

json to_json(const ServiceConfig& cfg) {
  json doc;
  doc["repositories"] = json::array();
  for (const auto& r : cfg.repositories)
    doc["repositories"].push_back(
        {{"repo_id", r.repo_id}, {"clone_url", r.clone_url}, {"default_branch", r.default_branch}});
  doc["max_run_queue"] = cfg.max_run_queue;
  doc["webhook_secret"] = cfg.webhook_secret ? json(*cfg.webhook_secret) : json(nullptr);
  doc["module_toggles"] = cfg.module_toggles;
  json t;
  t["file_size_limit_bytes"] = cfg.thresholds.file_size_limit_bytes;
  t["hardcoded_path_patterns"] = cfg.thresholds.hardcoded_path_patterns;
  t["timestamp_skew_seconds"] = cfg.thresholds.timestamp_skew_seconds;
  t["executable_allowlist"] = cfg.thresholds.executable_allowlist;
  t["sloc_max"] = cfg.thresholds.sloc_max ? json(*cfg.thresholds.sloc_max) : json(nullptr);
  doc["thresholds"] = t;
  doc["aging_window"] = cfg.aging_window;
  doc["listen_address"] = cfg.listen_address;
  doc["code_host_base_url"] = cfg.code_host_base_url;
  doc["state_dir"] = cfg.state_dir.string();
  doc["wait_queue_capacity"] =
      cfg.wait_queue_capacity ? json(*cfg.wait_queue_capacity) : json(nullptr);
  doc["admin_token"] = cfg.admin_token ? json(*cfg.admin_token) : json(nullptr);
  doc["code_host_token"] = cfg.code_host_token ? json(*cfg.code_host_token) : json(nullptr);
  doc["plugins_dir"] = cfg.plugins_dir.string();
  doc["default_timeout_seconds"] = cfg.default_timeout_seconds;
  doc["plugin_timeouts"] = cfg.plugin_timeouts;
  doc["kill_grace_seconds"] = cfg.kill_grace_seconds;
  doc["shutdown_grace_seconds"] = cfg.shutdown_grace_seconds;
  doc["lock_timeout_seconds"] = cfg.lock_timeout_seconds;
  doc["memory_budget_bytes"] = cfg.memory_budget_bytes;
  doc["http_retry_base_ms"] = cfg.http_retry_base_ms;
  json tools = json::object();
  for (const auto& [module, ts] : cfg.tools)
    tools[module] = {{"name", ts.name}, {"argv", ts.argv}, {"pass_exit_codes", ts.pass_exit_codes},
                     {"extensions", ts.extensions}};
  doc["tools"] = tools;
  json stubs = json::object();
  for (const auto& [platform, b] : cfg.build_stubs)
    stubs[platform] = {{"cost_seconds", b.cost_seconds}, {"fail_probability", b.fail_probability}};
  doc["build_stubs"] = stubs;
  return doc;
}

std::string serialize_config(const ServiceConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

}  // namespace lightci
