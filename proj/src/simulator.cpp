#include "lightci/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <queue>
#include <set>
#include <sstream>
#include <tuple>

#include <stdlib.h>

#include "lightci/engine.hpp"
#include "lightci/modulator.hpp"
#include "lightci/process.hpp"
#include "lightci/scheduler.hpp"
#include "lightci/source_manager.hpp"

namespace lightci {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double read_fraction(const json& doc, const char* key) {
  if (!doc.contains(key)) return 0;
  if (!doc[key].is_number()) throw ValidationError(key, "must be a number");
  const double v = doc[key].get<double>();
  if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(key, "must be within [0, 1]");
  return v;
}

Nanos to_ns(double s) { return static_cast<Nanos>(std::llround(s * 1e9)); }
double to_s(Nanos ns) { return static_cast<double>(ns) / 1e9; }

std::vector<std::string> module_names(Group g) {
  std::vector<std::string> out;
  for (const auto& m : builtin_modules())
    if (m.group == g) out.emplace_back(m.name);
  return out;
}

double module_cost(const WorkloadSpec& spec, const std::string& name) {
  if (!spec.module_cost_model) return 0;
  auto it = spec.module_cost_model->find(name);
  return it == spec.module_cost_model->end() ? 0 : it->second;
}

std::string hex_sha(std::mt19937_64& rng) {
  char buf[49];
  std::snprintf(buf, sizeof buf, "%016llx%016llx%016llx", static_cast<unsigned long long>(rng()),
                static_cast<unsigned long long>(rng()), static_cast<unsigned long long>(rng()));
  return std::string(buf, 40);
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

// ---------------------------------------------------------------------------

WorkloadSpec parse_workload(const json& doc) {
  if (!doc.is_object()) throw ParseError("workload spec must be a JSON object");
  WorkloadSpec s;
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_integer()) throw ValidationError("seed", "must be an integer");
    s.seed = doc["seed"].get<std::uint64_t>();
  }
  if (!doc.contains("slots") || !doc["slots"].is_array()) throw ValidationError("slots", "required array");
  for (std::size_t i = 0; i < doc["slots"].size(); ++i) {
    const auto& j = doc["slots"][i];
    const std::string field = "slots[" + std::to_string(i) + "]";
    if (!j.is_object()) throw ValidationError(field, "must be an object");
    Slot slot;
    if (j.contains("duration_s")) {
      if (!j["duration_s"].is_number() || j["duration_s"].get<double>() < 0)
        throw ValidationError(field + ".duration_s", "must be a non-negative number");
      slot.duration_s = j["duration_s"].get<double>();
    }
    if (!j.contains("arrivals") || !j["arrivals"].is_number_integer() || j["arrivals"].get<std::int64_t>() < 0)
      throw ValidationError(field + ".arrivals", "must be a non-negative integer");
    slot.arrivals = j["arrivals"].get<std::uint32_t>();
    s.slots.push_back(slot);
  }
  s.duplication_fraction = read_fraction(doc, "duplication_fraction");
  s.prebuild_fail_fraction = read_fraction(doc, "prebuild_fail_fraction");
  if (doc.contains("module_cost_model") && !doc["module_cost_model"].is_null()) {
    const auto& m = doc["module_cost_model"];
    if (!m.is_object()) throw ValidationError("module_cost_model", "must be an object");
    std::map<std::string, double> costs;
    for (auto it = m.begin(); it != m.end(); ++it) {
      if (!it->is_number() || it->get<double>() < 0)
        throw ValidationError("module_cost_model." + it.key(), "must be a non-negative number");
      costs[it.key()] = it->get<double>();
    }
    s.module_cost_model = std::move(costs);
  }
  if (doc.contains("max_run_queue")) {
    if (!doc["max_run_queue"].is_number_integer() || doc["max_run_queue"].get<std::int64_t>() < 1)
      throw ValidationError("max_run_queue", "must be a positive integer");
    s.max_run_queue = doc["max_run_queue"].get<std::uint32_t>();
  }
  return s;
}

WorkloadSpec load_workload(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read workload spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_workload(json::parse(ss.str()));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

json to_json(const WorkloadSpec& s) {
  json slots = json::array();
  for (const auto& sl : s.slots) slots.push_back({{"duration_s", sl.duration_s}, {"arrivals", sl.arrivals}});
  json j{{"seed", s.seed},
         {"slots", slots},
         {"duplication_fraction", s.duplication_fraction},
         {"prebuild_fail_fraction", s.prebuild_fail_fraction},
         {"max_run_queue", s.max_run_queue}};
  if (s.module_cost_model) j["module_cost_model"] = *s.module_cost_model;
  return j;
}

WorkloadSpec default_workload() {
  WorkloadSpec s;
  s.seed = 20;
  for (std::uint32_t a : {3u, 6u, 11u, 17u, 14u, 9u, 7u, 12u, 16u, 13u, 8u, 4u}) s.slots.push_back({1800, a});
  s.duplication_fraction = 0.4;
  s.prebuild_fail_fraction = 0.3;
  s.module_cost_model = std::map<std::string, double>{
      {"clang-format", 2},  {"cppcheck", 20},      {"pylint", 15},        {"indent", 1},
      {"doc-tag", 1},       {"doc-build", 30},     {"scancode", 40},      {"file-size", 1},
      {"newline", 1},       {"nobody", 1},         {"signed-off", 1},     {"hardcoded-path", 1},
      {"executable", 1},    {"timestamp", 1},      {"sloccount", 5},      {"flawfinder", 10},
      {"tizen", 120},       {"android", 120},      {"ubuntu", 120},       {"yocto", 120}};
  return s;
}

// ---------------------------------------------------------------------------

std::vector<SimEvent> generate_trace(const WorkloadSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  const std::size_t prebuild_count = module_names(Group::PreBuild).size();
  const double f = spec.duplication_fraction;
  auto dup_total = [f](std::uint64_t k) {
    return static_cast<std::uint64_t>(std::floor(static_cast<double>(k) * f + 1e-9));
  };

  std::vector<SimEvent> trace;
  std::uint64_t emitted = 0;
  std::uint64_t deficit = 0;
  std::uint64_t next_pr = 1;
  Nanos slot_start = 0;
  for (std::size_t si = 0; si < spec.slots.size(); ++si) {
    const std::uint32_t a = spec.slots[si].arrivals;
    std::uint64_t want = dup_total(emitted + a) - dup_total(emitted) + deficit;
    // The first event of a slot is always fresh, so every resubmission has
    // a same-slot target.
    const std::uint64_t d = std::min<std::uint64_t>(want, a == 0 ? 0 : a - 1);
    deficit = want - d;

    std::vector<char> is_dup(a, 0);
    for (std::uint64_t i = 0; i < d; ++i) is_dup[a - 1 - i] = 1;
    for (std::size_t i = a > 1 ? a - 1 : 0; i > 1; --i) {  // Fisher-Yates over positions 1..a-1
      const std::size_t j = 1 + rng() % i;
      std::swap(is_dup[i], is_dup[j]);
    }

    std::vector<std::uint64_t> fresh;
    for (std::uint32_t i = 0; i < a; ++i) {
      SimEvent se;
      se.slot = si;
      PrEvent& ev = se.event;
      ev.repo_id = std::string(kSimRepo);
      if (is_dup[i]) {
        ev.pr_number = fresh[rng() % fresh.size()];
        ev.action = PrAction::Synchronized;
      } else {
        ev.pr_number = next_pr++;
        ev.action = PrAction::Opened;
        fresh.push_back(ev.pr_number);
      }
      ev.head_commit = hex_sha(rng);
      ev.source_branch = "pr-" + std::to_string(ev.pr_number);
      ev.target_branch = "main";
      ev.delivery_id = "sim-" + std::to_string(emitted + i + 1);
      ev.received_at = slot_start;
      if (unit(rng) < spec.prebuild_fail_fraction) se.fail_module = rng() % prebuild_count;
      trace.push_back(std::move(se));
    }
    emitted += a;
    slot_start += to_ns(spec.slots[si].duration_s);
  }
  return trace;
}

json trace_to_json(const std::vector<SimEvent>& trace) {
  json out = json::array();
  for (const auto& se : trace) {
    json j{{"slot", se.slot},
           {"repo", se.event.repo_id},
           {"pr", se.event.pr_number},
           {"action", to_string(se.event.action)},
           {"head_sha", se.event.head_commit},
           {"delivery_id", se.event.delivery_id},
           {"received_at_s", to_s(se.event.received_at)}};
    j["fail_module"] = se.fail_module ? json(*se.fail_module) : json(nullptr);
    out.push_back(std::move(j));
  }
  return out;
}

std::string_view to_string(Policy p) { return p == Policy::Baseline ? "baseline" : "lightsys"; }

Policy parse_policy(std::string_view s) {
  std::string l(s);
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "baseline") return Policy::Baseline;
  if (l == "lightsys") return Policy::LightSys;
  throw ValidationError("policy", "expected baseline or lightsys, got '" + std::string(s) + "'");
}

json to_json(const SimMetrics& m) {
  return {{"policy", m.policy},
          {"mode", m.mode},
          {"events_total", m.events_total},
          {"unique_prs", m.unique_prs},
          {"executed_pipelines", m.executed_pipelines},
          {"passed_pipelines", m.passed_pipelines},
          {"failed_pipelines", m.failed_pipelines},
          {"modules_executed", m.modules_executed},
          {"tasks_killed_superseded", m.tasks_killed_superseded},
          {"tasks_killed_reclaimed", m.tasks_killed_reclaimed},
          {"peak_concurrent_running", m.peak_concurrent_running},
          {"max_run_queue", m.max_run_queue},
          {"makespan_s", m.makespan_s},
          {"max_task_sojourn_s", m.max_task_sojourn_s}};
}

SimMetrics metrics_from_json(const json& j) {
  SimMetrics m;
  m.policy = j.at("policy").get<std::string>();
  m.mode = j.at("mode").get<std::string>();
  m.events_total = j.at("events_total").get<std::uint64_t>();
  m.unique_prs = j.at("unique_prs").get<std::uint64_t>();
  m.executed_pipelines = j.at("executed_pipelines").get<std::uint64_t>();
  m.passed_pipelines = j.at("passed_pipelines").get<std::uint64_t>();
  m.failed_pipelines = j.at("failed_pipelines").get<std::uint64_t>();
  m.modules_executed = j.at("modules_executed").get<std::uint64_t>();
  m.tasks_killed_superseded = j.at("tasks_killed_superseded").get<std::uint64_t>();
  m.tasks_killed_reclaimed = j.at("tasks_killed_reclaimed").get<std::uint64_t>();
  m.peak_concurrent_running = j.at("peak_concurrent_running").get<std::uint64_t>();
  m.max_run_queue = j.at("max_run_queue").get<std::uint32_t>();
  m.makespan_s = j.at("makespan_s").get<double>();
  m.max_task_sojourn_s = j.at("max_task_sojourn_s").get<double>();
  return m;
}

// ---------------------------------------------------------------------------
// Virtual-clock replay

namespace {

struct PlannedRun {
  std::vector<Nanos> module_starts;
  Nanos end = 0;
  PipelineResult result;
};

PlannedRun plan_pipeline(const WorkloadSpec& spec, const SimEvent& se, Nanos t, bool gating) {
  static const auto pre = module_names(Group::PreBuild);
  static const auto post = module_names(Group::PostBuild);
  PlannedRun run;
  run.result.verdict = PipelineVerdict::Success;
  Nanos now = t;
  for (std::size_t i = 0; i < pre.size(); ++i) {
    const Nanos cost = to_ns(module_cost(spec, pre[i]));
    run.module_starts.push_back(now);
    CheckResult r;
    r.plugin_name = pre[i];
    r.duration_ms = cost / 1'000'000;
    r.status = se.fail_module == i ? CheckStatus::Fail : CheckStatus::Pass;
    now += cost;
    run.result.prebuild_results.push_back(std::move(r));
    if (se.fail_module == i) {
      run.result.verdict = PipelineVerdict::PrebuildFailed;
      if (gating) break;
    }
  }
  Nanos end = now;
  if (run.result.verdict == PipelineVerdict::Success || !gating) {
    const std::size_t width = std::min<std::size_t>(spec.max_run_queue, post.size());
    std::vector<Nanos> lanes(std::max<std::size_t>(width, 1), now);
    for (const auto& name : post) {
      auto lane = std::min_element(lanes.begin(), lanes.end());
      const Nanos cost = to_ns(module_cost(spec, name));
      run.module_starts.push_back(*lane);
      CheckResult r;
      r.plugin_name = name;
      r.duration_ms = cost / 1'000'000;
      *lane += cost;
      end = std::max(end, *lane);
      run.result.postbuild_results.push_back(std::move(r));
    }
  }
  run.end = end;
  run.result.cpu_proxy = count_executed(run.result);
  return run;
}

SimMetrics replay_virtual(const WorkloadSpec& spec, const std::vector<SimEvent>& trace, Policy policy) {
  const bool lightsys = policy == Policy::LightSys;
  SimMetrics m;
  m.policy = std::string(to_string(policy));
  m.mode = "virtual";
  m.max_run_queue = spec.max_run_queue;
  m.events_total = trace.size();
  {
    std::set<std::uint64_t> prs;
    for (const auto& se : trace) prs.insert(se.event.pr_number);
    m.unique_prs = prs.size();
  }

  ManualClock clock;
  std::map<TaskId, PlannedRun> running;
  std::map<TaskId, const SimEvent*> origin;
  Nanos last_event = 0;

  SchedulerOptions so;
  so.max_run_queue = spec.max_run_queue;
  so.supersede_enabled = lightsys;
  so.history_limit = 64;
  Scheduler sched(so, clock, [&](const TransitionRecord& rec) {
    if (rec.to == TaskState::exit(Verdict::Killed)) {
      last_event = std::max(last_event, rec.ts);
      if (auto it = running.find(rec.task_id); it != running.end()) {
        for (Nanos s : it->second.module_starts)
          if (s < rec.ts) ++m.modules_executed;
        running.erase(it);
      }
    }
  });

  using Done = std::tuple<Nanos, TaskId>;
  std::priority_queue<Done, std::vector<Done>, std::greater<>> done;
  auto admit_all = [&] {
    while (auto id = sched.admit()) {
      PlannedRun run = plan_pipeline(spec, *origin.at(*id), clock.now(), lightsys);
      done.emplace(run.end, *id);
      running.emplace(*id, std::move(run));
    }
  };

  std::size_t next = 0;
  while (next < trace.size() || !done.empty()) {
    const Nanos arrival = next < trace.size() ? trace[next].event.received_at : INT64_MAX;
    if (!done.empty() && std::get<0>(done.top()) <= arrival) {
      auto [t, id] = done.top();
      done.pop();
      auto it = running.find(id);
      if (it == running.end()) continue;  // killed earlier
      clock.set(t);
      PipelineResult result = std::move(it->second.result);
      m.modules_executed += result.cpu_proxy;
      running.erase(it);
      const bool pass = result.verdict == PipelineVerdict::Success;
      const Nanos submitted = sched.find(id)->submitted_at;
      sched.on_task_finished(id, std::move(result));
      ++m.executed_pipelines;
      ++(pass ? m.passed_pipelines : m.failed_pipelines);
      m.max_task_sojourn_s = std::max(m.max_task_sojourn_s, to_s(t - submitted));
      last_event = std::max(last_event, t);
      admit_all();
      continue;
    }
    // Every arrival of the slot is queued before anything is admitted.
    clock.set(arrival);
    const std::size_t slot = trace[next].slot;
    while (next < trace.size() && trace[next].slot == slot) {
      PrTask task = sched.make_task(trace[next].event);
      origin[task.task_id] = &trace[next];
      sched.submit(std::move(task));
      ++next;
    }
    last_event = std::max(last_event, arrival);
    admit_all();
  }
  m.tasks_killed_superseded = sched.counters().killed_superseded;
  m.tasks_killed_reclaimed = sched.counters().killed_reclaimed;
  m.peak_concurrent_running = sched.counters().peak_running;
  m.makespan_s = trace.empty() ? 0 : to_s(last_event - trace.front().event.received_at);
  return m;
}

// ---------------------------------------------------------------------------
// Integration replay: the real engine with stub processes.

PluginStore builtin_store() {
  std::vector<PluginDescriptor> plugins;
  for (const auto& b : builtin_modules()) {
    PluginDescriptor d;
    d.name = std::string(b.name);
    d.group = b.group;
    d.order_index = b.number;
    d.timeout_seconds = 60;
    plugins.push_back(std::move(d));
  }
  return PluginStore(std::move(plugins));
}

fs::path make_temp_dir() {
  std::string tmpl = (fs::temp_directory_path() / "lightci-sim-XXXXXX").string();
  if (!::mkdtemp(tmpl.data())) throw Error("cannot create a temporary directory");
  return tmpl;
}

SimMetrics replay_integration(const WorkloadSpec& spec, const std::vector<SimEvent>& trace, Policy policy,
                              const ReplayOptions& options) {
  const bool lightsys = policy == Policy::LightSys;
  SimMetrics m;
  m.policy = std::string(to_string(policy));
  m.mode = "integration";
  m.max_run_queue = spec.max_run_queue;
  m.events_total = trace.size();
  {
    std::set<std::uint64_t> prs;
    for (const auto& se : trace) prs.insert(se.event.pr_number);
    m.unique_prs = prs.size();
  }

  const bool temp = options.state_dir.empty();
  const fs::path dir = temp ? make_temp_dir() : options.state_dir;
  fs::create_directories(dir);

  std::map<std::string, std::size_t> fail_at;  // head sha -> failing pre-build index
  for (const auto& se : trace)
    if (se.fail_module) fail_at[se.event.head_commit] = *se.fail_module;
  std::map<std::string, std::size_t> pre_index;
  {
    const auto pre = module_names(Group::PreBuild);
    for (std::size_t i = 0; i < pre.size(); ++i) pre_index[pre[i]] = i;
  }

  ServiceConfig cfg;
  cfg.state_dir = dir;
  cfg.max_run_queue = spec.max_run_queue;
  cfg.kill_grace_seconds = 1;

  std::mutex mu;
  double max_sojourn = 0;
  std::uint64_t modules = 0;
  MonotonicClock mono;

  EngineOptions eo;
  eo.workspaces = std::make_shared<ScratchWorkspaces>(dir);
  eo.store = builtin_store();
  eo.accept_unknown_repos = true;
  eo.supersede_enabled = lightsys;
  eo.gating = lightsys;
  eo.admission_held = true;
  eo.write_journal = options.write_journal;
  eo.housekeeping_interval = std::chrono::milliseconds(200);
  const double cost = options.integration_module_cost_s;
  eo.builtin_override = [&fail_at, &pre_index, cost](const PluginDescriptor& d,
                                                     const PluginContext& ctx) -> std::optional<CheckResult> {
    bool fail = false;
    if (d.group == Group::PreBuild) {
      auto f = fail_at.find(ctx.task.head_commit);
      fail = f != fail_at.end() && pre_index.at(d.name) == f->second;
    }
    SpawnSpec spawn;
    spawn.argv = {"/bin/sh", "-c", "sleep " + std::to_string(cost) + "; exit " + (fail ? "1" : "0")};
    spawn.cwd = ctx.workspace;
    spawn.env = inherited_environment();
    spawn.close_stdin = true;
    SuperviseOptions so;
    so.timeout = std::chrono::seconds(d.timeout_seconds);
    so.kill_grace = ctx.kill_grace;
    so.cancelled = ctx.cancelled;
    so.on_spawn = ctx.on_spawn;
    so.on_exit = ctx.on_exit;
    auto out = run_supervised(spawn, so);
    CheckResult r;
    r.duration_ms = out.duration_ms;
    r.report_text = out.output;
    r.status = out.kind == ProcessOutcome::Kind::Exited
                   ? (out.code == 0 ? CheckStatus::Pass : CheckStatus::Fail)
                   : CheckStatus::Crashed;
    return r;
  };
  eo.on_pipeline = [&](const PrTask& task, const PipelineResult& r) {
    std::lock_guard lk(mu);
    modules += r.cpu_proxy;
    if (r.verdict != PipelineVerdict::Killed)
      max_sojourn = std::max(max_sojourn, to_s(mono.now() - task.submitted_at));
  };

  const auto start = std::chrono::steady_clock::now();
  SchedulerCounters counters;
  {
    Engine engine(cfg, std::move(eo));
    std::size_t next = 0;
    while (next < trace.size()) {
      const std::size_t slot = trace[next].slot;
      engine.set_admission(false);
      for (; next < trace.size() && trace[next].slot == slot; ++next) engine.dispatch(trace[next].event);
      engine.set_admission(true);
      engine.wait_idle(std::chrono::hours(24));
    }
    engine.wait_idle(std::chrono::hours(24));
    counters = engine.status()->snapshot.counters;
    engine.shutdown(std::chrono::seconds(5));
  }
  m.makespan_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  m.modules_executed = modules;
  m.max_task_sojourn_s = max_sojourn;
  m.executed_pipelines = counters.passed + counters.failed;
  m.passed_pipelines = counters.passed;
  m.failed_pipelines = counters.failed;
  m.tasks_killed_superseded = counters.killed_superseded;
  m.tasks_killed_reclaimed = counters.killed_reclaimed;
  m.peak_concurrent_running = counters.peak_running;
  if (temp) {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  return m;
}

}  // namespace

SimMetrics replay(const WorkloadSpec& spec, const std::vector<SimEvent>& trace, Policy policy,
                  const ReplayOptions& options) {
  if (trace.empty()) throw ValidationError("trace", "must not be empty");
  if (spec.module_cost_model) return replay_virtual(spec, trace, policy);
  return replay_integration(spec, trace, policy, options);
}

std::vector<CurvePoint> makespan_curve(const WorkloadSpec& spec, std::uint32_t max_arrivals) {
  WorkloadSpec s;
  s.seed = spec.seed;
  s.max_run_queue = spec.max_run_queue;
  if (spec.module_cost_model) {
    s.module_cost_model = spec.module_cost_model;
  } else {
    std::map<std::string, double> unit_costs;
    for (const auto& b : builtin_modules()) unit_costs[std::string(b.name)] = 1.0;
    s.module_cost_model = std::move(unit_costs);
  }
  std::vector<CurvePoint> curve;
  for (std::uint32_t n = 1; n <= max_arrivals; ++n) {
    s.slots = {{0, n}};
    auto m = replay_virtual(s, generate_trace(s), Policy::LightSys);
    curve.push_back({n, m.makespan_s});
  }
  return curve;
}

Comparison compare(const WorkloadSpec& spec, const ReplayOptions& options) {
  const auto trace = generate_trace(spec);
  Comparison c;
  ReplayOptions bo = options, lo = options;
  if (!options.state_dir.empty()) {
    bo.state_dir = options.state_dir / "baseline";
    lo.state_dir = options.state_dir / "lightsys";
  }
  c.baseline = replay(spec, trace, Policy::Baseline, bo);
  c.lightsys = replay(spec, trace, Policy::LightSys, lo);
  auto saving = [](double l, double b) { return b > 0 ? 1.0 - l / b : 0.0; };
  c.modules_saving = saving(static_cast<double>(c.lightsys.modules_executed),
                            static_cast<double>(c.baseline.modules_executed));
  c.pipelines_saving = saving(static_cast<double>(c.lightsys.executed_pipelines),
                              static_cast<double>(c.baseline.executed_pipelines));
  c.makespan_saving = saving(c.lightsys.makespan_s, c.baseline.makespan_s);
  c.curve = makespan_curve(spec);
  return c;
}

json to_json(const Comparison& c) {
  json curve = json::array();
  for (const auto& p : c.curve) curve.push_back({{"arrivals", p.arrivals}, {"makespan_s", p.makespan_s}});
  return {{"baseline", to_json(c.baseline)},
          {"lightsys", to_json(c.lightsys)},
          {"savings",
           {{"modules_executed", c.modules_saving},
            {"executed_pipelines", c.pipelines_saving},
            {"makespan", c.makespan_saving}}},
          {"makespan_curve", curve}};
}

std::string comparison_table(const Comparison& c) {
  auto row = [](const std::string& name, double b, double l) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-26s %14.2f %14.2f\n", name.c_str(), b, l);
    return std::string(buf);
  };
  auto count = [](const std::string& name, std::uint64_t b, std::uint64_t l) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-26s %14llu %14llu\n", name.c_str(), static_cast<unsigned long long>(b),
                  static_cast<unsigned long long>(l));
    return std::string(buf);
  };
  std::string out;
  char head[128];
  std::snprintf(head, sizeof head, "%-26s %14s %14s\n", "metric", "baseline", "lightsys");
  out += head;
  out += count("events_total", c.baseline.events_total, c.lightsys.events_total);
  out += count("unique_prs", c.baseline.unique_prs, c.lightsys.unique_prs);
  out += count("executed_pipelines", c.baseline.executed_pipelines, c.lightsys.executed_pipelines);
  out += count("modules_executed", c.baseline.modules_executed, c.lightsys.modules_executed);
  out += count("tasks_killed_superseded", c.baseline.tasks_killed_superseded, c.lightsys.tasks_killed_superseded);
  out += count("peak_concurrent_running", c.baseline.peak_concurrent_running, c.lightsys.peak_concurrent_running);
  out += row("makespan_s", c.baseline.makespan_s, c.lightsys.makespan_s);
  out += row("max_task_sojourn_s", c.baseline.max_task_sojourn_s, c.lightsys.max_task_sojourn_s);
  char tail[160];
  std::snprintf(tail, sizeof tail, "saving: modules %.1f%%, pipelines %.1f%%, makespan %.1f%%\n",
                c.modules_saving * 100, c.pipelines_saving * 100, c.makespan_saving * 100);
  out += tail;
  return out;
}

std::string curve_csv(const Comparison& c) {
  std::string out = "arrivals,makespan_s\n";
  for (const auto& p : c.curve) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%u,%.6f\n", p.arrivals, p.makespan_s);
    out += buf;
  }
  return out;
}

}  // namespace lightci
