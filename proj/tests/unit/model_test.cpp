#include <random>
#include <set>

#include <gtest/gtest.h>

#include "lightci/model.hpp"

using namespace lightci;

namespace {

// Independent edge list, written out by hand.
const std::set<std::pair<std::string, std::string>> kEdges = {
    {"Ready", "Run"},           {"Ready", "Hanging"},         {"Run", "Wait"},
    {"Run", "Exit(Pass)"},      {"Run", "Exit(Fail)"},        {"Run", "Hanging"},
    {"Wait", "Run"},            {"Wait", "Hanging"},          {"Hanging", "Exit(Killed)"},
};

int state_class(TaskState s) { return static_cast<int>(s.kind); }

}  // namespace

TEST(Transition, ReadyToRunIsLegal) {
  EXPECT_TRUE(validate_transition(TaskState::ready(), TaskState::run()));
}

TEST(Transition, TerminalHasNoOutgoingEdges) {
  for (auto v : {Verdict::Pass, Verdict::Fail, Verdict::Killed})
    for (auto to : all_task_states()) EXPECT_FALSE(validate_transition(TaskState::exit(v), to));
}

TEST(Transition, MatchesHandWrittenEdgeList) {
  for (auto from : all_task_states())
    for (auto to : all_task_states()) {
      const bool expected = kEdges.count({to_string(from), to_string(to)}) > 0;
      EXPECT_EQ(validate_transition(from, to), expected) << to_string(from) << " -> " << to_string(to);
    }
}

TEST(Transition, ClassMatrixHasEightEntries) {
  bool matrix[5][5] = {};
  for (auto from : all_task_states())
    for (auto to : all_task_states())
      if (validate_transition(from, to)) matrix[state_class(from)][state_class(to)] = true;
  int count = 0;
  for (auto& row : matrix)
    for (bool b : row) count += b;
  EXPECT_EQ(count, 8);
}

TEST(Transition, HangingOnlyExitsKilled) {
  EXPECT_TRUE(validate_transition(TaskState::hanging(), TaskState::exit(Verdict::Killed)));
  EXPECT_FALSE(validate_transition(TaskState::hanging(), TaskState::exit(Verdict::Pass)));
  EXPECT_FALSE(validate_transition(TaskState::ready(), TaskState::exit(Verdict::Killed)));
}

TEST(Transition, GuardedRandomWalksStayLegal) {
  std::mt19937 rng(12345);
  const auto states = all_task_states();
  for (int walk = 0; walk < 2000; ++walk) {
    TaskState s = TaskState::ready();
    for (int step = 0; step < 30; ++step) {
      const TaskState to = states[rng() % states.size()];
      if (!validate_transition(s, to)) continue;
      ASSERT_FALSE(s.terminal()) << "terminal state mutated";
      ASSERT_TRUE(kEdges.count({to_string(s), to_string(to)})) << to_string(s) << " -> " << to_string(to);
      s = to;
    }
  }
}

TEST(TaskStateText, RoundTrips) {
  for (auto s : all_task_states()) EXPECT_EQ(parse_task_state(to_string(s)), s);
  EXPECT_THROW(parse_task_state("Sleeping"), ParseError);
}

TEST(PrEventValidation, Invariants) {
  PrEvent ev;
  ev.repo_id = "org/repo";
  ev.pr_number = 231;
  ev.head_commit = std::string(40, 'a');
  EXPECT_NO_THROW(validate(ev));
  ev.pr_number = 0;
  EXPECT_THROW(validate(ev), ValidationError);
  ev.pr_number = 1;
  ev.head_commit = std::string(40, 'A');
  EXPECT_THROW(validate(ev), ValidationError);
  ev.head_commit = std::string(39, 'a');
  EXPECT_THROW(validate(ev), ValidationError);
}

TEST(CommitId, Shape) {
  EXPECT_TRUE(is_commit_id("0123456789abcdef0123456789abcdef01234567"));
  EXPECT_FALSE(is_commit_id("0123456789abcdef0123456789abcdef0123456g"));
  EXPECT_FALSE(is_commit_id(""));
}

TEST(Report, BoundedWithSuffix) {
  EXPECT_EQ(bound_report("short"), "short");
  const std::string big(kReportLimit + 100, 'x');
  const std::string bounded = bound_report(big);
  EXPECT_LE(bounded.size(), kReportLimit);
  EXPECT_EQ(bounded.substr(bounded.size() - kTruncatedSuffix.size()), kTruncatedSuffix);
  const std::string exact(kReportLimit, 'y');
  EXPECT_EQ(bound_report(exact), exact);
}

TEST(CpuProxy, CountsNonSkipped) {
  PipelineResult r;
  r.prebuild_results = {CheckResult{"a", CheckStatus::Pass}, CheckResult{"b", CheckStatus::Skipped},
                        CheckResult{"c", CheckStatus::Fail}};
  r.postbuild_results = {CheckResult{"d", CheckStatus::TimedOut}, CheckResult{"e", CheckStatus::Skipped}};
  EXPECT_EQ(count_executed(r), 3u);
}

TEST(Descriptor, StagingIsAdvisory) {
  PluginDescriptor d;
  EXPECT_TRUE(d.blocking());
  d.tier = Tier::Good;
  EXPECT_TRUE(d.blocking());
  d.tier = Tier::Staging;
  EXPECT_FALSE(d.blocking());
  EXPECT_EQ(d.timeout_seconds, 600);
}

TEST(EnumsText, TierAndGroup) {
  EXPECT_EQ(parse_tier("staging"), Tier::Staging);
  EXPECT_EQ(parse_group("pre"), Group::PreBuild);
  EXPECT_EQ(parse_group("post"), Group::PostBuild);
  EXPECT_EQ(to_string(Group::PostBuild), "post");
}
