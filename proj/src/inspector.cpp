#include "lightci/inspector.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include <spdlog/spdlog.h>

#include "lightci/process.hpp"

namespace lightci {

namespace fs = std::filesystem;
using std::chrono::milliseconds;

const ChangeSet& PluginContext::changes() const {
  std::call_once(changes_once_, [this] {
    try {
      changes_ = collect_changeset(workspace, task.target_branch);
    } catch (const std::exception& e) {
      changes_error_ = e.what();
    }
  });
  if (!changes_) throw Error("cannot collect change set: " + changes_error_);
  return *changes_;
}

namespace {

using SteadyClock = std::chrono::steady_clock;

fs::path report_dir(const PluginDescriptor& d, const PluginContext& ctx) {
  fs::path dir = !ctx.build_root.empty()
                     ? ctx.build_root / "reports" / d.name
                     : (ctx.config ? ctx.config->state_dir : fs::path("state")) / "reports" /
                           std::to_string(ctx.task.task_id) / d.name;
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> list_files(const fs::path& dir, const std::string& name_filter = {}) {
  std::vector<std::string> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (auto it = fs::recursive_directory_iterator(dir, ec); it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (ec) break;
    if (!it->is_regular_file(ec)) continue;
    if (!name_filter.empty() && it->path().filename().string().find(name_filter) == std::string::npos)
      continue;
    out.push_back(it->path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> contract_env(const PluginDescriptor& d, const PluginContext& ctx,
                                      const fs::path& reports) {
  std::vector<std::string> env;
  for (auto& kv : inherited_environment())
    if (kv.rfind("CI_", 0) != 0) env.push_back(std::move(kv));
  env.push_back("CI_WORKSPACE=" + fs::absolute(ctx.workspace).string());
  env.push_back("CI_REPO=" + ctx.task.repo_id);
  env.push_back("CI_PR_NUMBER=" + std::to_string(ctx.task.pr_number));
  env.push_back("CI_HEAD_SHA=" + ctx.task.head_commit);
  env.push_back("CI_GROUP=" + std::string(to_string(d.group)));
  env.push_back("CI_REPORT_DIR=" + fs::absolute(reports).string());
  if (d.group == Group::PostBuild && !ctx.build_root.empty())
    env.push_back("CI_BUILD_ROOT=" + fs::absolute(ctx.build_root).string());
  return env;
}

CheckResult supervise(const PluginDescriptor& d, const PluginContext& ctx, std::vector<std::string> argv,
                      std::vector<std::string> extra_env) {
  const fs::path reports = report_dir(d, ctx);
  SpawnSpec spec;
  spec.argv = std::move(argv);
  spec.cwd = ctx.workspace;
  spec.env = contract_env(d, ctx, reports);
  spec.env.insert(spec.env.end(), extra_env.begin(), extra_env.end());
  spec.close_stdin = true;

  SuperviseOptions opts;
  opts.timeout = std::chrono::seconds(d.timeout_seconds);
  opts.kill_grace = ctx.kill_grace;
  opts.output_limit = kReportLimit;
  opts.cancelled = ctx.cancelled;
  opts.on_spawn = ctx.on_spawn;
  opts.on_exit = ctx.on_exit;
  auto out = run_supervised(spec, opts);

  CheckResult r;
  r.plugin_name = d.name;
  r.duration_ms = out.duration_ms;
  if (out.output_truncated) {
    out.output.resize(std::min(out.output.size(), kReportLimit - kTruncatedSuffix.size()));
    out.output += kTruncatedSuffix;
  }
  r.report_text = bound_report(std::move(out.output));
  using K = ProcessOutcome::Kind;
  switch (out.kind) {
    case K::Exited:
      r.status = out.code == 0 ? CheckStatus::Pass : out.code == 2 ? CheckStatus::Crashed : CheckStatus::Fail;
      break;
    case K::TimedOut:
      r.status = CheckStatus::TimedOut;
      r.report_text = bound_report(r.report_text + "\n[timed out after " +
                                   std::to_string(d.timeout_seconds) + " s]");
      break;
    case K::Cancelled:
      r.status = CheckStatus::Crashed;
      r.report_text = bound_report(r.report_text + "\n[terminated: task killed]");
      break;
    case K::Signaled:
      r.status = CheckStatus::Crashed;
      r.report_text = bound_report(r.report_text + "\n[killed by signal " + std::to_string(out.code) + "]");
      break;
    case K::SpawnFailed:
      r.status = CheckStatus::Crashed;
      break;
  }
  r.artifact_paths = list_files(reports);
  return r;
}

}  // namespace

CheckResult run_build_module(const PluginDescriptor& platform, const fs::path& root,
                             const PluginContext& ctx) {
  if (root.empty()) throw Error("build module " + platform.name + " needs a build root");
  CheckResult r;
  if (platform.kind == PluginKind::External) {
    r = supervise(platform, ctx, {platform.exec_path}, {});
  } else {
    BuildStub stub;
    if (ctx.config)
      if (auto it = ctx.config->build_stubs.find(platform.name); it != ctx.config->build_stubs.end())
        stub = it->second;
    const bool fail = stub_build_fails(stub, platform.name, ctx.task.head_commit);
    r = supervise(platform, ctx, {"/bin/sh", "-c", build_stub_script(), platform.name},
                  {"CI_PLATFORM=" + platform.name, "CI_STUB_COST=" + std::to_string(stub.cost_seconds),
                   std::string("CI_STUB_FAIL=") + (fail ? "1" : "0")});
  }
  auto outputs = list_files(root / "output", platform.name);
  r.artifact_paths.insert(r.artifact_paths.end(), outputs.begin(), outputs.end());
  return r;
}

CheckResult run_plugin(const PluginDescriptor& d, const PluginContext& ctx) {
  const auto start = SteadyClock::now();
  CheckResult r;
  try {
    std::optional<CheckResult> over;
    if (d.kind == PluginKind::Builtin && ctx.builtin_override) over = ctx.builtin_override(d, ctx);
    if (over) {
      r = std::move(*over);
    } else if (d.kind == PluginKind::External) {
      if (d.group == Group::PostBuild && !ctx.build_root.empty()) r = run_build_module(d, ctx.build_root, ctx);
      else r = supervise(d, ctx, {d.exec_path}, {});
    } else {
      const BuiltinModule* m = find_builtin(d.name);
      if (!m) throw Error("no built-in module named '" + d.name + "'");
      static const ServiceConfig kDefaults;
      const ServiceConfig& cfg = ctx.config ? *ctx.config : kDefaults;
      switch (m->role) {
        case BuiltinRole::NativeCheck:
          r = *run_native_check(d.name, ctx.changes(), cfg, ctx.workspace);
          break;
        case BuiltinRole::ToolWrapper: {
          auto it = cfg.tools.find(d.name);
          const ToolSpec& spec = it != cfg.tools.end() ? it->second : default_tool_specs().at(d.name);
          ToolRunOptions opts;
          opts.workspace = ctx.workspace;
          opts.timeout_seconds = d.timeout_seconds;
          opts.sloc_max = cfg.thresholds.sloc_max;
          r = run_tool_wrapper(d.name, spec, ctx.changes(), opts);
          break;
        }
        case BuiltinRole::BuildStub:
          r = run_build_module(d, ctx.build_root, ctx);
          break;
      }
    }
  } catch (const std::exception& e) {
    r.status = CheckStatus::Crashed;
    r.report_text = bound_report(std::string("plugin error: ") + e.what());
  }
  r.plugin_name = d.name;
  r.advisory = !d.blocking();
  if (r.status == CheckStatus::Skipped) {
    r.duration_ms = 0;
  } else if (r.duration_ms == 0) {
    r.duration_ms = std::chrono::duration_cast<milliseconds>(SteadyClock::now() - start).count();
  }
  return r;
}

namespace {

void post_status(const PipelineHooks& hooks, const PrTask& task, const std::string& plugin,
                 std::string_view state, const std::string& description) {
  if (!hooks.code_host) return;
  try {
    hooks.code_host->report(task.repo_id, task.head_commit, plugin, state, description, hooks.detail_url);
  } catch (const std::exception& e) {
    spdlog::warn("report for task {} plugin {}: {}", task.task_id, plugin, e.what());
  }
}

CheckResult invoke(const PluginDescriptor& d, const PluginContext& ctx, const PipelineHooks& hooks) {
  post_status(hooks, ctx.task, d.name, "pending", "running");
  CheckResult r = run_plugin(d, ctx);
  std::string description = std::string(to_string(r.status));
  if (r.advisory && r.failed()) description += " (advisory)";
  post_status(hooks, ctx.task, d.name, commit_status_state(r), description);
  const bool cancelled = ctx.cancelled && ctx.cancelled();
  if (hooks.aging && !cancelled) {
    try {
      hooks.aging->record_aging(d.name, r);
    } catch (const UnknownPlugin&) {
    }
  }
  return r;
}

}  // namespace

std::string failure_comment(const PrTask& task, const PipelineResult& result) {
  std::string body = "lightci: " + std::string(to_string(result.verdict)) + " for " +
                     task.head_commit.substr(0, 12) + "\n\nFailing modules:\n";
  for (const auto* list : {&result.prebuild_results, &result.postbuild_results})
    for (const auto& r : *list)
      if (r.failed() && !r.advisory)
        body += "- " + r.plugin_name + ": " + std::string(to_string(r.status)) + "\n";
  return body;
}

PipelineResult run_pipeline(const PrTask& task, const PluginStore& store, const PluginContext& ctx,
                            const PipelineHooks& hooks) {
  if (ctx.workspace.empty() || !fs::exists(ctx.workspace))
    throw WorkspaceMissing("task " + std::to_string(task.task_id) + " has no workspace");
  auto cancelled = [&] { return ctx.cancelled && ctx.cancelled(); };

  PipelineResult result;
  result.task_id = task.task_id;
  result.verdict = PipelineVerdict::Success;

  for (const auto& d : execution_plan(store, Group::PreBuild)) {
    if (cancelled()) break;
    CheckResult r = invoke(d, ctx, hooks);
    const bool blocking_failure = d.blocking() && r.failed();
    result.prebuild_results.push_back(std::move(r));
    if (blocking_failure) {
      result.verdict = PipelineVerdict::PrebuildFailed;
      if (ctx.gating) break;
    }
  }

  if ((result.verdict == PipelineVerdict::Success || !ctx.gating) && !cancelled()) {
    const auto plan = execution_plan(store, Group::PostBuild);
    result.postbuild_results.resize(plan.size());
    std::vector<bool> ran(plan.size(), false);
    const std::size_t width = std::min<std::size_t>(
        plan.size(), ctx.config ? std::max<std::uint32_t>(1, ctx.config->max_run_queue) : 1);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < plan.size(); i = next++) {
        if (cancelled()) continue;
        result.postbuild_results[i] = invoke(plan[i], ctx, hooks);
        ran[i] = true;
      }
    };
    {
      std::vector<std::jthread> pool;
      for (std::size_t t = 1; t < width; ++t) pool.emplace_back(worker);
      worker();
    }
    std::vector<CheckResult> executed;
    for (std::size_t i = 0; i < plan.size(); ++i)
      if (ran[i]) executed.push_back(std::move(result.postbuild_results[i]));
    result.postbuild_results = std::move(executed);
    for (const auto& r : result.postbuild_results)
      if (!r.advisory && r.failed() && result.verdict == PipelineVerdict::Success)
        result.verdict = PipelineVerdict::PostbuildFailed;
  }

  if (cancelled()) result.verdict = PipelineVerdict::Killed;
  result.cpu_proxy = count_executed(result);

  if ((result.verdict == PipelineVerdict::PrebuildFailed ||
       result.verdict == PipelineVerdict::PostbuildFailed) &&
      hooks.code_host) {
    try {
      hooks.code_host->comment(task.repo_id, task.pr_number, failure_comment(task, result));
    } catch (const std::exception& e) {
      spdlog::warn("comment for task {}: {}", task.task_id, e.what());
    }
  }
  return result;
}

void terminate_task_processes(PrTask& task, milliseconds grace) {
  for (pid_t pgid : task.child_process_ids) terminate_group(pgid, grace);
  task.child_process_ids.clear();
}

}  // namespace lightci
