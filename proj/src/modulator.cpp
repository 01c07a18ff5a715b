#include "lightci/modulator.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>
#include <unistd.h>

namespace lightci {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<BuiltinModule>& builtin_modules() {
  using R = BuiltinRole;
  static const std::vector<BuiltinModule> kModules{
      {1, "clang-format", Group::PreBuild, R::ToolWrapper},
      {2, "cppcheck", Group::PreBuild, R::ToolWrapper},
      {3, "pylint", Group::PreBuild, R::ToolWrapper},
      {4, "indent", Group::PreBuild, R::NativeCheck},
      {5, "doc-tag", Group::PreBuild, R::ToolWrapper},
      {6, "doc-build", Group::PreBuild, R::ToolWrapper},
      {7, "scancode", Group::PreBuild, R::ToolWrapper},
      {8, "file-size", Group::PreBuild, R::NativeCheck},
      {9, "newline", Group::PreBuild, R::NativeCheck},
      {10, "nobody", Group::PreBuild, R::NativeCheck},
      {11, "signed-off", Group::PreBuild, R::NativeCheck},
      {12, "hardcoded-path", Group::PreBuild, R::NativeCheck},
      {13, "executable", Group::PreBuild, R::NativeCheck},
      {14, "timestamp", Group::PreBuild, R::NativeCheck},
      {15, "sloccount", Group::PreBuild, R::ToolWrapper},
      {16, "flawfinder", Group::PreBuild, R::ToolWrapper},
      {17, "tizen", Group::PostBuild, R::BuildStub},
      {18, "android", Group::PostBuild, R::BuildStub},
      {19, "ubuntu", Group::PostBuild, R::BuildStub},
      {20, "yocto", Group::PostBuild, R::BuildStub},
  };
  return kModules;
}

const BuiltinModule* find_builtin(std::string_view name) {
  for (const auto& m : builtin_modules())
    if (m.name == name) return &m;
  return nullptr;
}

namespace {

bool store_order(const PluginDescriptor& a, const PluginDescriptor& b) {
  if (a.tier != b.tier) return a.tier < b.tier;
  if (a.order_index != b.order_index) return a.order_index < b.order_index;
  if (a.group != b.group) return a.group < b.group;
  return a.name < b.name;
}

PluginDescriptor read_manifest(const fs::path& dir, Tier tier) {
  const fs::path manifest = dir / "plugin.json";
  std::ifstream in(manifest);
  if (!in) throw ManifestError(manifest.string() + ": cannot read");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ManifestError(manifest.string() + ": " + e.what());
  }
  auto field = [&](const char* key) -> const json& {
    if (!j.is_object() || !j.contains(key)) throw ManifestError(manifest.string() + ": missing field '" + key + "'");
    return j.at(key);
  };
  PluginDescriptor d;
  d.tier = tier;
  d.kind = PluginKind::External;
  try {
    d.name = field("name").get<std::string>();
    d.group = parse_group(field("group").get<std::string>());
    d.timeout_seconds = field("timeout_seconds").get<int>();
    d.exec_path = (dir / field("exec").get<std::string>()).string();
    if (j.contains("order_index")) d.order_index = j.at("order_index").get<int>();
    else d.order_index = -1;
    if (j.contains("enabled")) d.enabled = j.at("enabled").get<bool>();
  } catch (const json::exception& e) {
    throw ManifestError(manifest.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw ManifestError(manifest.string() + ": " + e.what());
  }
  if (d.name.empty()) throw ManifestError(manifest.string() + ": empty name");
  if (d.timeout_seconds < 1) throw ManifestError(manifest.string() + ": timeout_seconds must be >= 1");
  if (::access(d.exec_path.c_str(), X_OK) != 0 || !fs::is_regular_file(d.exec_path))
    throw ManifestError(manifest.string() + ": exec '" + d.exec_path + "' is not an executable file");
  return d;
}

}  // namespace

PluginStore::PluginStore(std::vector<PluginDescriptor> plugins) : plugins_(std::move(plugins)) {
  std::set<std::string> names;
  std::set<std::tuple<Group, Tier, int>> slots;
  for (const auto& p : plugins_) {
    if (!names.insert(p.name).second) throw DuplicateName(p.name);
    if (!slots.insert({p.group, p.tier, p.order_index}).second)
      throw ManifestError("plugin '" + p.name + "': order_index " + std::to_string(p.order_index) +
                          " already used in tier " + std::string(to_string(p.tier)));
  }
  std::stable_sort(plugins_.begin(), plugins_.end(), store_order);
}

const PluginDescriptor* PluginStore::find(std::string_view name) const {
  for (const auto& p : plugins_)
    if (p.name == name) return &p;
  return nullptr;
}

PluginStore load_store(const fs::path& root, const ServiceConfig& config) {
  std::vector<PluginDescriptor> all;
  for (const auto& m : builtin_modules()) {
    PluginDescriptor d;
    d.name = std::string(m.name);
    d.tier = Tier::Base;
    d.group = m.group;
    d.kind = PluginKind::Builtin;
    d.timeout_seconds = static_cast<int>(config.default_timeout_seconds);
    d.order_index = m.number;
    all.push_back(std::move(d));
  }

  for (Tier tier : {Tier::Base, Tier::Good, Tier::Staging}) {
    const fs::path dir = root / to_string(tier);
    if (!fs::is_directory(dir)) continue;
    std::vector<fs::path> entries;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory()) entries.push_back(e.path());
    std::sort(entries.begin(), entries.end());
    std::vector<PluginDescriptor> found;
    for (const auto& e : entries) found.push_back(read_manifest(e, tier));

    // Manifests without an order_index follow the explicit ones, by name.
    for (Group g : {Group::PreBuild, Group::PostBuild}) {
      int next = 100;
      for (const auto& d : all)
        if (d.tier == tier && d.group == g) next = std::max(next, d.order_index + 1);
      for (const auto& d : found)
        if (d.group == g) next = std::max(next, d.order_index + 1);
      for (auto& d : found)
        if (d.group == g && d.order_index < 0) d.order_index = next++;
    }
    for (auto& d : found) all.push_back(std::move(d));
  }

  for (const auto& [name, on] : config.module_toggles) {
    auto it = std::find_if(all.begin(), all.end(), [&](const auto& d) { return d.name == name; });
    if (it == all.end()) throw ValidationError("module_toggles." + name, "unknown plugin");
    it->enabled = on;
  }
  for (const auto& [name, seconds] : config.plugin_timeouts) {
    auto it = std::find_if(all.begin(), all.end(), [&](const auto& d) { return d.name == name; });
    if (it == all.end()) throw ValidationError("plugin_timeouts." + name, "unknown plugin");
    it->timeout_seconds = static_cast<int>(seconds);
  }
  return PluginStore(std::move(all));
}

std::vector<PluginDescriptor> execution_plan(const PluginStore& store, Group group) {
  std::vector<PluginDescriptor> plan;
  for (const auto& p : store.plugins())
    if (p.enabled && p.group == group) plan.push_back(p);
  return plan;
}

// ---------------------------------------------------------------------------

std::string_view commit_status_state(const CheckResult& r) {
  if (r.advisory) return "success";
  switch (r.status) {
    case CheckStatus::Pass:
    case CheckStatus::Skipped: return "success";
    case CheckStatus::Fail: return "failure";
    case CheckStatus::TimedOut:
    case CheckStatus::Crashed: return "error";
  }
  return "error";
}

CodeHostClient::CodeHostClient(std::string base_url, std::optional<std::string> token,
                               std::chrono::milliseconds retry_base, int max_retries)
    : base_url_(std::move(base_url)), token_(std::move(token)), retry_base_(retry_base),
      max_retries_(max_retries) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
  auto scheme = base_url_.find("://");
  auto slash = base_url_.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  host_part_ = base_url_.substr(0, slash);
  path_prefix_ = slash == std::string::npos ? "" : base_url_.substr(slash);
}

int CodeHostClient::post_with_retry(const std::string& path, const std::string& body) {
  httplib::Client cli(host_part_);
  cli.set_connection_timeout(5);
  cli.set_read_timeout(10);
  httplib::Headers headers{{"Accept", "application/vnd.github+json"}};
  if (token_) headers.emplace("Authorization", "Bearer " + *token_);
  int status = -1;
  for (int attempt = 0; attempt <= max_retries_; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(retry_base_ * (1 << (attempt - 1)));
    ++requests_;
    auto res = cli.Post(path_prefix_ + path, headers, body, "application/json");
    status = res ? res->status : -1;
    if (status >= 200 && status < 300) return status;
    if (status >= 400 && status < 500) return status;
  }
  return status;
}

void CodeHostClient::comment(const std::string& repo_id, std::uint64_t pr_number,
                             const std::string& body) {
  if (!configured()) return;
  const std::string path = "/repos/" + repo_id + "/issues/" + std::to_string(pr_number) + "/comments";
  int status = post_with_retry(path, json{{"body", body}}.dump());
  if (status < 200 || status >= 300)
    throw CommentFailed("comment on " + repo_id + "#" + std::to_string(pr_number) +
                        " failed with status " + std::to_string(status));
}

void CodeHostClient::report(const std::string& repo_id, const std::string& head_commit,
                            const std::string& plugin_name, std::string_view state,
                            const std::string& description, const std::string& detail_url) {
  if (!configured()) return;
  json body{{"state", state}, {"context", "lightci/" + plugin_name}};
  if (!description.empty()) body["description"] = description.substr(0, 140);
  if (!detail_url.empty()) body["target_url"] = detail_url;
  const std::string path = "/repos/" + repo_id + "/statuses/" + head_commit;
  int status = post_with_retry(path, body.dump());
  if (status < 200 || status >= 300)
    throw ReportFailed("status for " + plugin_name + " on " + head_commit + " failed with status " +
                       std::to_string(status));
}

// ---------------------------------------------------------------------------

AgingTracker::AgingTracker(const PluginStore& store, std::uint32_t aging_window,
                           std::optional<fs::path> persist_path)
    : window_(aging_window), path_(std::move(persist_path)) {
  for (const auto& p : store.plugins()) {
    tiers_[p.name] = p.tier;
    records_[p.name].plugin_name = p.name;
  }
  load();
}

void AgingTracker::load() {
  if (!path_ || !fs::exists(*path_)) return;
  try {
    std::ifstream in(*path_);
    json j = json::parse(in);
    for (const auto& [name, rec] : j.items()) {
      auto it = records_.find(name);
      if (it == records_.end()) continue;  // plugin removed since last run
      it->second.consecutive_clean_runs = rec.value("consecutive_clean_runs", std::uint64_t{0});
      if (rec.contains("last_failure_at") && !rec.at("last_failure_at").is_null())
        it->second.last_failure_at = rec.at("last_failure_at").get<std::int64_t>();
    }
  } catch (const json::exception& e) {
    spdlog::warn("ignoring unreadable aging file {}: {}", path_->string(), e.what());
  }
}

void AgingTracker::save_locked() const {
  if (!path_) return;
  json j = json::object();
  for (const auto& [name, rec] : records_) {
    j[name] = {{"consecutive_clean_runs", rec.consecutive_clean_runs},
               {"last_failure_at", rec.last_failure_at ? json(*rec.last_failure_at) : json(nullptr)}};
  }
  const fs::path tmp = path_->string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << j.dump(2) << "\n";
  }
  fs::rename(tmp, *path_);
}

AgingRecord AgingTracker::record_aging(const std::string& plugin_name, const CheckResult& result) {
  std::lock_guard lock(mu_);
  auto it = records_.find(plugin_name);
  if (it == records_.end()) throw UnknownPlugin(plugin_name);
  if (result.status == CheckStatus::Pass) {
    ++it->second.consecutive_clean_runs;
  } else if (result.status != CheckStatus::Skipped) {
    it->second.consecutive_clean_runs = 0;
    it->second.last_failure_at =
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count();
  }
  save_locked();
  return it->second;
}

bool AgingTracker::promotion_eligible(const std::string& plugin_name) const {
  std::lock_guard lock(mu_);
  auto it = records_.find(plugin_name);
  if (it == records_.end()) throw UnknownPlugin(plugin_name);
  if (tiers_.at(plugin_name) != Tier::Staging) throw NotStaging(plugin_name);
  return it->second.consecutive_clean_runs >= window_;
}

AgingRecord AgingTracker::get(const std::string& plugin_name) const {
  std::lock_guard lock(mu_);
  auto it = records_.find(plugin_name);
  if (it == records_.end()) throw UnknownPlugin(plugin_name);
  return it->second;
}

}  // namespace lightci
