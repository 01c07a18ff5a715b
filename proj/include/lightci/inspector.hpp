#pragma once

// Pipeline execution: the pre-build group runs sequentially and stops at
// the first blocking failure; only a clean pre-build group lets the
// post-build group run, in parallel up to min(max_run_queue, plan size).
//
// External plugin contract:
//   cwd            workspace root
//   CI_WORKSPACE   workspace root
//   CI_REPO        repository id
//   CI_PR_NUMBER   pull request number
//   CI_HEAD_SHA    head commit
//   CI_GROUP       "pre" | "post"
//   CI_REPORT_DIR  writable directory for artifacts
//   CI_BUILD_ROOT  build root (post-build group only)
//   stdin closed; exit 0 = Pass, 2 = Crashed (contract error), other = Fail.

#include <chrono>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>

#include "lightci/builder.hpp"
#include "lightci/checks.hpp"
#include "lightci/config.hpp"
#include "lightci/modulator.hpp"
#include "lightci/model.hpp"

namespace lightci {

class WorkspaceMissing : public Error {
 public:
  using Error::Error;
};

/// Everything a plugin invocation needs besides its descriptor.
struct PluginContext {
  PrTask task;
  std::filesystem::path workspace;
  std::filesystem::path build_root;  // empty: reports go under <state_dir>/reports
  const ServiceConfig* config = nullptr;
  std::chrono::milliseconds kill_grace{std::chrono::seconds(5)};
  /// false: every pre-build plugin runs and the post-build group runs even
  /// after a pre-build failure (the simulator's baseline policy).
  bool gating = true;

  std::function<bool()> cancelled;
  std::function<bool(pid_t)> on_spawn;
  std::function<void(pid_t)> on_exit;

  /// Test and simulator hook: when it returns a result, the built-in
  /// implementation is bypassed.
  std::function<std::optional<CheckResult>(const PluginDescriptor&, const PluginContext&)> builtin_override;

  /// Lazily collected once per pipeline.
  const ChangeSet& changes() const;

 private:
  mutable std::once_flag changes_once_;
  mutable std::optional<ChangeSet> changes_;
  mutable std::string changes_error_;
  friend CheckResult run_plugin(const PluginDescriptor&, const PluginContext&);
};

struct PipelineHooks {
  CodeHostClient* code_host = nullptr;
  AgingTracker* aging = nullptr;
  std::string detail_url;  // target_url of commit statuses
};

CheckResult run_plugin(const PluginDescriptor& descriptor, const PluginContext& ctx);

/// Runs the platform stand-in (built-in build module) or an external
/// post-build plugin with CI_BUILD_ROOT set.
CheckResult run_build_module(const PluginDescriptor& platform, const std::filesystem::path& root,
                             const PluginContext& ctx);

PipelineResult run_pipeline(const PrTask& task, const PluginStore& store, const PluginContext& ctx,
                            const PipelineHooks& hooks = {});

/// Terminates every registered process group of the task and clears the
/// registry.
void terminate_task_processes(PrTask& task, std::chrono::milliseconds grace);

/// Summary comment body listing failing modules.
std::string failure_comment(const PrTask& task, const PipelineResult& result);

}  // namespace lightci
