#include "lightci/model.hpp"

#include <algorithm>
#include <array>
#include <utility>

namespace lightci {

std::string_view to_string(PrAction a) {
  switch (a) {
    case PrAction::Opened: return "opened";
    case PrAction::Synchronized: return "synchronized";
    case PrAction::Closed: return "closed";
  }
  return "?";
}

bool is_commit_id(std::string_view s) {
  return s.size() == 40 && std::all_of(s.begin(), s.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

void validate(const PrEvent& ev) {
  if (ev.pr_number < 1) throw ValidationError("pr_number", "must be >= 1");
  if (!is_commit_id(ev.head_commit))
    throw ValidationError("head_commit", "expected 40 lowercase hex digits");
  if (ev.repo_id.empty()) throw ValidationError("repo_id", "must not be empty");
}

// ---------------------------------------------------------------------------

std::string to_string(TaskState s) {
  switch (s.kind) {
    case StateKind::Ready: return "Ready";
    case StateKind::Run: return "Run";
    case StateKind::Wait: return "Wait";
    case StateKind::Hanging: return "Hanging";
    case StateKind::Exit:
      switch (s.verdict) {
        case Verdict::Pass: return "Exit(Pass)";
        case Verdict::Fail: return "Exit(Fail)";
        case Verdict::Killed: return "Exit(Killed)";
      }
  }
  return "?";
}

TaskState parse_task_state(std::string_view s) {
  for (TaskState st : all_task_states())
    if (to_string(st) == s) return st;
  throw ParseError("unknown task state '" + std::string(s) + "'");
}

std::vector<TaskState> all_task_states() {
  return {TaskState::ready(),
          TaskState::run(),
          TaskState::wait(),
          TaskState::hanging(),
          TaskState::exit(Verdict::Pass),
          TaskState::exit(Verdict::Fail),
          TaskState::exit(Verdict::Killed)};
}

bool validate_transition(TaskState from, TaskState to) {
  static constexpr std::array<std::pair<TaskState, TaskState>, 8> kEdges{{
      {TaskState::ready(), TaskState::run()},
      {TaskState::run(), TaskState::wait()},
      {TaskState::wait(), TaskState::run()},
      {TaskState::run(), TaskState::exit(Verdict::Pass)},
      {TaskState::run(), TaskState::exit(Verdict::Fail)},
      {TaskState::ready(), TaskState::hanging()},
      {TaskState::run(), TaskState::hanging()},
      {TaskState::wait(), TaskState::hanging()},
  }};
  // Hanging -> Exit(Killed) is the eighth edge when Exit verdicts are
  // counted as one target class; it is listed separately to keep the
  // table keyed on exact states.
  if (from == TaskState::hanging()) return to == TaskState::exit(Verdict::Killed);
  return std::any_of(kEdges.begin(), kEdges.end(),
                     [&](const auto& e) { return e.first == from && e.second == to; });
}

// ---------------------------------------------------------------------------

std::string_view to_string(Tier t) {
  switch (t) {
    case Tier::Base: return "base";
    case Tier::Good: return "good";
    case Tier::Staging: return "staging";
  }
  return "?";
}

std::string_view to_string(Group g) {
  return g == Group::PreBuild ? "pre" : "post";
}

Tier parse_tier(std::string_view s) {
  if (s == "base") return Tier::Base;
  if (s == "good") return Tier::Good;
  if (s == "staging") return Tier::Staging;
  throw ParseError("unknown tier '" + std::string(s) + "'");
}

Group parse_group(std::string_view s) {
  if (s == "pre" || s == "pre-build" || s == "prebuild") return Group::PreBuild;
  if (s == "post" || s == "post-build" || s == "postbuild") return Group::PostBuild;
  throw ParseError("unknown group '" + std::string(s) + "'");
}

std::string_view to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::Pass: return "Pass";
    case CheckStatus::Fail: return "Fail";
    case CheckStatus::Skipped: return "Skipped";
    case CheckStatus::TimedOut: return "TimedOut";
    case CheckStatus::Crashed: return "Crashed";
  }
  return "?";
}

std::string bound_report(std::string text) {
  if (text.size() <= kReportLimit) return text;
  text.resize(kReportLimit - kTruncatedSuffix.size());
  text.append(kTruncatedSuffix);
  return text;
}

std::string_view to_string(PipelineVerdict v) {
  switch (v) {
    case PipelineVerdict::Success: return "Success";
    case PipelineVerdict::PrebuildFailed: return "PrebuildFailed";
    case PipelineVerdict::PostbuildFailed: return "PostbuildFailed";
    case PipelineVerdict::Killed: return "Killed";
  }
  return "?";
}

std::uint64_t count_executed(const PipelineResult& r) {
  auto executed = [](const CheckResult& c) { return c.status != CheckStatus::Skipped; };
  return static_cast<std::uint64_t>(
      std::count_if(r.prebuild_results.begin(), r.prebuild_results.end(), executed) +
      std::count_if(r.postbuild_results.begin(), r.postbuild_results.end(), executed));
}

}  // namespace lightci
