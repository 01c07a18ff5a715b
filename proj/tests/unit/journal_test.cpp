#include <random>

#include <gtest/gtest.h>

#include "lightci/journal.hpp"
#include "test_support.hpp"

using namespace lightci;
using testsupport::TempDir;

namespace {

TransitionRecord rec(TaskId id, std::optional<TaskState> from, TaskState to, const std::string& reason,
                     Nanos ts = 1) {
  TransitionRecord r;
  r.ts = ts;
  r.task_id = id;
  r.from = from;
  r.to = to;
  r.reason = reason;
  r.repo_id = "org/r";
  r.pr_number = 9;
  r.generation = 2;
  return r;
}

std::vector<JournalRecord> parse_all(const std::vector<TransitionRecord>& recs) {
  std::vector<JournalRecord> out;
  for (const auto& r : recs) out.push_back(parse_journal_line(format_journal_line(r)));
  return out;
}

}  // namespace

TEST(Journal, LineFormat) {
  const auto line = format_journal_line(rec(4, TaskState::ready(), TaskState::run(), "admitted", 77));
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j["transition"], "Ready->Run");
  EXPECT_EQ(j["reason"], "admitted");
  EXPECT_EQ(j["task_id"], 4);
  EXPECT_EQ(j["ts"], 77);
  EXPECT_EQ(j["repo"], "org/r");
  EXPECT_EQ(j["pr"], 9);
  EXPECT_EQ(j["generation"], 2);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const auto created = nlohmann::json::parse(format_journal_line(rec(4, std::nullopt, TaskState::ready(), "submitted")));
  EXPECT_EQ(created["transition"], "None->Ready");
}

TEST(Journal, ParseRoundTrip) {
  for (auto from : all_task_states())
    for (auto to : all_task_states()) {
      auto back = parse_journal_line(format_journal_line(rec(1, from, to, "x", 5)));
      EXPECT_EQ(back.from, std::optional<TaskState>(from));
      EXPECT_EQ(back.to, to);
      EXPECT_EQ(back.ts, 5);
      EXPECT_EQ(back.reason, "x");
    }
  EXPECT_THROW(parse_journal_line("{}"), ParseError);
  EXPECT_THROW(parse_journal_line("garbage"), ParseError);
  EXPECT_THROW(parse_journal_line(R"({"ts":1,"task_id":1,"transition":"Ready=>Run","reason":""})"), ParseError);
}

TEST(Journal, FileAppendAndRead) {
  TempDir dir;
  {
    Journal j(dir / "j.ndjson");
    j.append(rec(1, std::nullopt, TaskState::ready(), "submitted"));
    j.append(rec(1, TaskState::ready(), TaskState::run(), "admitted"));
  }
  {
    Journal j(dir / "j.ndjson");  // reopen appends
    j.append(rec(1, TaskState::run(), TaskState::exit(Verdict::Pass), "finished"));
  }
  auto recs = read_journal(dir / "j.ndjson");
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[2].to, TaskState::exit(Verdict::Pass));
}

TEST(Journal, ReplayDetectsIllegalEdge) {
  auto report = replay_journal(parse_all({
      rec(1, std::nullopt, TaskState::ready(), "submitted"),
      rec(1, TaskState::ready(), TaskState::exit(Verdict::Pass), "bogus"),
  }));
  ASSERT_EQ(report.violations.size(), 1u);
  EXPECT_NE(report.violations[0].find("Ready"), std::string::npos);
}

TEST(Journal, ReplayDetectsDiscontinuity) {
  auto report = replay_journal(parse_all({
      rec(1, std::nullopt, TaskState::ready(), "submitted"),
      rec(1, TaskState::wait(), TaskState::run(), "resumed"),
  }));
  EXPECT_FALSE(report.violations.empty());
}

TEST(Journal, ReplayCounters) {
  auto report = replay_journal(parse_all({
      rec(1, std::nullopt, TaskState::ready(), "submitted"),
      rec(2, std::nullopt, TaskState::ready(), "submitted"),
      rec(3, std::nullopt, TaskState::ready(), "submitted"),
      rec(4, std::nullopt, TaskState::ready(), "submitted"),
      rec(1, TaskState::ready(), TaskState::run(), "admitted"),
      rec(1, TaskState::run(), TaskState::exit(Verdict::Pass), "finished"),
      rec(2, TaskState::ready(), TaskState::run(), "admitted"),
      rec(2, TaskState::run(), TaskState::exit(Verdict::Fail), "finished"),
      rec(3, TaskState::ready(), TaskState::hanging(), "superseded"),
      rec(3, TaskState::hanging(), TaskState::exit(Verdict::Killed), "superseded"),
  }));
  EXPECT_TRUE(report.violations.empty());
  EXPECT_EQ(report.counters.enqueued, 4u);
  EXPECT_EQ(report.counters.passed, 1u);
  EXPECT_EQ(report.counters.failed, 1u);
  EXPECT_EQ(report.counters.killed, 1u);
  EXPECT_EQ(report.counters.live, 1u);
  EXPECT_EQ(report.final_states.at(4), TaskState::ready());
}

TEST(Journal, SchedulerTracesReplayClean) {
  std::mt19937 rng(7);
  for (int trace = 0; trace < 100; ++trace) {
    ManualClock clock;
    std::vector<TransitionRecord> log;
    Scheduler s(SchedulerOptions{1 + static_cast<std::uint32_t>(rng() % 3)}, clock,
                [&](const TransitionRecord& r) { log.push_back(r); });
    for (int step = 0; step < 40; ++step) {
      clock.advance(1);
      switch (rng() % 4) {
        case 0:
          s.submit(s.make_task(testsupport::make_event("org/r", 1 + rng() % 4, PrAction::Opened,
                                                       testsupport::sha_of(step + 1))));
          break;
        case 1:
          s.admit();
          break;
        case 2:
          for (TaskId id : s.snapshot().run_queue) {
            PipelineResult r;
            s.on_task_finished(id, r);
            break;
          }
          break;
        case 3:
          s.reclaim_oldest();
          break;
      }
    }
    auto report = replay_journal(parse_all(log));
    ASSERT_TRUE(report.violations.empty()) << report.violations.front();
    EXPECT_EQ(report.counters.enqueued, s.counters().enqueued);
    EXPECT_EQ(report.counters.passed, s.counters().passed);
    EXPECT_EQ(report.counters.killed, s.counters().killed);
    EXPECT_EQ(report.counters.live, s.counters().live);
  }
}
