#pragma once

// Workload simulator: synthetic PR traces replayed against the real
// scheduler under two policies.
//
//   Baseline  every event runs its full pipeline: no supersession, no
//             pre-build fail-fast, post-build runs even after failures.
//   LightSys  supersession and pre-build gating.
//
// With a module_cost_model the replay is a discrete-event run on a virtual
// clock (deterministic). Without one it drives the real engine with stub
// processes in scratch workspaces.
//
// Workload spec (JSON):
//   {"seed": 7, "slots": [{"duration_s": 1800, "arrivals": 20}, ...],
//    "duplication_fraction": 0.4, "prebuild_fail_fraction": 0.3,
//    "module_cost_model": {"cppcheck": 2.5, "tizen": 60, ...},
//    "max_run_queue": 4}
// Modules missing from the cost model cost 0 s.
//
// Metrics file: see docs/metrics.md.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "lightci/model.hpp"

namespace lightci {

struct Slot {
  double duration_s = 0;
  std::uint32_t arrivals = 0;
};

struct WorkloadSpec {
  std::uint64_t seed = 1;
  std::vector<Slot> slots;
  double duplication_fraction = 0;
  double prebuild_fail_fraction = 0;
  std::optional<std::map<std::string, double>> module_cost_model;
  std::uint32_t max_run_queue = 4;
};

WorkloadSpec parse_workload(const nlohmann::json& doc);
WorkloadSpec load_workload(const std::filesystem::path& path);
nlohmann::json to_json(const WorkloadSpec& spec);

/// The synthetic default: twelve half-hour slots shaped like a working
/// day, 40% duplication, 30% pre-build failures, unit module costs.
WorkloadSpec default_workload();

inline constexpr std::string_view kSimRepo = "sim/repo";

struct SimEvent {
  PrEvent event;
  std::size_t slot = 0;
  /// Index into the pre-build plan of the module that fails for this
  /// event's commit, if any.
  std::optional<std::size_t> fail_module;
};

/// Deterministic for a given spec. Resubmissions are Synchronized events
/// for a PR emitted earlier in the same slot. At the end of each slot the
/// duplicate count is floor(n * duplication_fraction) for the n events so
/// far; a slot too small to hold its share defers the rest to later slots.
std::vector<SimEvent> generate_trace(const WorkloadSpec& spec);
nlohmann::json trace_to_json(const std::vector<SimEvent>& trace);

enum class Policy { Baseline, LightSys };
std::string_view to_string(Policy p);
Policy parse_policy(std::string_view s);

struct SimMetrics {
  std::string policy;
  std::string mode;  // "virtual" or "integration"
  std::uint64_t events_total = 0;
  std::uint64_t unique_prs = 0;
  std::uint64_t executed_pipelines = 0;
  std::uint64_t passed_pipelines = 0;
  std::uint64_t failed_pipelines = 0;
  std::uint64_t modules_executed = 0;
  std::uint64_t tasks_killed_superseded = 0;
  std::uint64_t tasks_killed_reclaimed = 0;
  std::uint64_t peak_concurrent_running = 0;
  std::uint32_t max_run_queue = 0;
  double makespan_s = 0;
  double max_task_sojourn_s = 0;
};

nlohmann::json to_json(const SimMetrics& m);
SimMetrics metrics_from_json(const nlohmann::json& j);

struct ReplayOptions {
  /// Integration mode only: state directory for the engine (a fresh
  /// temporary directory when empty).
  std::filesystem::path state_dir;
  /// Integration mode only: wall-clock cost of every stub module.
  double integration_module_cost_s = 0;
  /// Integration mode only: records the journal there when set.
  bool write_journal = false;
};

SimMetrics replay(const WorkloadSpec& spec, const std::vector<SimEvent>& trace, Policy policy,
                  const ReplayOptions& options = {});

struct CurvePoint {
  std::uint32_t arrivals = 0;
  double makespan_s = 0;
};

struct Comparison {
  SimMetrics baseline;
  SimMetrics lightsys;
  double modules_saving = 0;     // 1 - lightsys/baseline
  double pipelines_saving = 0;
  double makespan_saving = 0;
  std::vector<CurvePoint> curve;  // LightSys makespan for 1..20 simultaneous arrivals
};

Comparison compare(const WorkloadSpec& spec, const ReplayOptions& options = {});
nlohmann::json to_json(const Comparison& c);
std::string comparison_table(const Comparison& c);
/// CSV rows "arrivals,makespan_s".
std::string curve_csv(const Comparison& c);

/// LightSys makespan of n simultaneous fresh PRs, no failures, on the
/// spec's cost model (unit costs when absent).
std::vector<CurvePoint> makespan_curve(const WorkloadSpec& spec, std::uint32_t max_arrivals = 20);

}  // namespace lightci
