#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "lightci/scheduler.hpp"
#include "test_support.hpp"

using namespace lightci;
using testsupport::make_event;
using testsupport::sha_of;

namespace {

struct Harness {
  explicit Harness(std::uint32_t r = 2, std::optional<std::uint32_t> cap = {}, bool supersede = true)
      : sched(SchedulerOptions{r, cap, supersede, 4096}, clock,
              [this](const TransitionRecord& rec) { log.push_back(rec); },
              [this](PrTask& t) { terminated.push_back({t.task_id, t.child_process_ids}); }) {}

  TaskId submit(std::uint64_t pr, int priority = 0, const std::string& repo = "org/r") {
    clock.advance(10);
    auto t = sched.make_task(make_event(repo, pr, PrAction::Opened, sha_of(pr)), priority);
    return sched.submit(std::move(t)).task_id;
  }
  PipelineResult verdict(PipelineVerdict v) {
    PipelineResult r;
    r.verdict = v;
    return r;
  }

  ManualClock clock;
  std::vector<TransitionRecord> log;
  std::vector<std::pair<TaskId, std::set<pid_t>>> terminated;
  Scheduler sched;
};

void check_task_invariants(const Scheduler& s) {
  for (const auto& t : s.snapshot().tasks) {
    if (t.state.terminal()) {
      EXPECT_TRUE(t.finished_at.has_value());
      EXPECT_TRUE(t.child_process_ids.empty());
    }
    if (t.state == TaskState::run()) EXPECT_TRUE(t.started_at.has_value());
  }
}

}  // namespace

TEST(Scheduler, FifoWithSingleSlot) {
  Harness h(1);
  const TaskId a = h.submit(1), b = h.submit(2), c = h.submit(3);
  std::vector<TaskId> order;
  for (int i = 0; i < 3; ++i) {
    auto id = h.sched.admit();
    ASSERT_TRUE(id);
    EXPECT_FALSE(h.sched.admit());  // capacity 1
    order.push_back(*id);
    h.sched.on_task_finished(*id, h.verdict(PipelineVerdict::Success));
  }
  EXPECT_EQ(order, (std::vector<TaskId>{a, b, c}));
}

TEST(Scheduler, BoundedWaitQueueRejectsWithoutSideEffects) {
  Harness h(1, 2);
  h.submit(1);
  h.submit(2);
  const auto before = h.sched.snapshot();
  const auto log_size = h.log.size();
  EXPECT_THROW(h.submit(3), WaitQueueFull);
  EXPECT_EQ(h.sched.snapshot().wait_queue, before.wait_queue);
  EXPECT_EQ(h.log.size(), log_size);
  EXPECT_EQ(h.sched.counters().enqueued, 2u);
}

TEST(Scheduler, SupersedingSubmitFitsFullQueue) {
  Harness h(1, 1);
  h.submit(1);
  EXPECT_NO_THROW(h.submit(1));  // replaces generation 1 in place
  EXPECT_EQ(h.sched.waiting_count(), 1u);
}

TEST(Scheduler, AdmissionOrderIsSubmissionOrder) {
  Harness h(3);
  std::vector<TaskId> submitted, admitted;
  for (std::uint64_t pr = 1; pr <= 100; ++pr) submitted.push_back(h.submit(pr));
  std::mt19937 rng(4);
  while (admitted.size() < submitted.size()) {
    while (auto id = h.sched.admit()) admitted.push_back(*id);
    // finish a random running task
    auto running = h.sched.snapshot().run_queue;
    if (running.empty()) break;
    const TaskId victim = running[rng() % running.size()];
    h.sched.on_task_finished(victim, h.verdict(PipelineVerdict::Success));
  }
  EXPECT_EQ(admitted, submitted);
}

TEST(Scheduler, AdmitEmptyAndCapacity) {
  Harness h(2);
  EXPECT_FALSE(h.sched.admit());
  h.submit(1);
  h.submit(2);
  h.submit(3);
  EXPECT_TRUE(h.sched.admit());
  EXPECT_TRUE(h.sched.admit());
  EXPECT_FALSE(h.sched.admit());
  EXPECT_EQ(h.sched.running_count(), 2u);
  EXPECT_EQ(h.sched.waiting_count(), 1u);
}

TEST(Scheduler, HeadAdmittedAfterExitTraceOracle) {
  Harness h(3);
  std::deque<TaskId> oracle;
  for (std::uint64_t pr = 1; pr <= 10; ++pr) oracle.push_back(h.submit(pr));
  std::vector<TaskId> running;
  for (int i = 0; i < 3; ++i) {
    running.push_back(*h.sched.admit());
    EXPECT_EQ(running.back(), oracle.front());
    oracle.pop_front();
  }
  while (!running.empty()) {
    h.sched.on_task_finished(running.front(), h.verdict(PipelineVerdict::Success));
    running.erase(running.begin());
    if (!oracle.empty()) {
      auto id = h.sched.admit();
      ASSERT_TRUE(id);
      EXPECT_EQ(*id, oracle.front());
      oracle.pop_front();
      running.push_back(*id);
      EXPECT_EQ(h.sched.running_count(), std::min<std::size_t>(3, running.size()));
    }
  }
}

TEST(Scheduler, PriorityBreaksTiesLowerFirst) {
  Harness h(1);
  const TaskId a = h.submit(1, 5);
  const TaskId b = h.submit(2, 0);
  const TaskId c = h.submit(3, 5);
  EXPECT_EQ(*h.sched.admit(), b);
  h.sched.on_task_finished(b, h.verdict(PipelineVerdict::Success));
  EXPECT_EQ(*h.sched.admit(), a);
  h.sched.on_task_finished(a, h.verdict(PipelineVerdict::Success));
  EXPECT_EQ(*h.sched.admit(), c);
}

TEST(Scheduler, SupersedeRunningGeneration) {
  Harness h(2);
  const TaskId g1 = h.submit(7);
  ASSERT_EQ(*h.sched.admit(), g1);
  ASSERT_TRUE(h.sched.register_process(g1, 4242));
  auto t2 = h.sched.make_task(make_event("org/r", 7, PrAction::Synchronized, sha_of(77)));
  EXPECT_EQ(t2.generation, 2u);
  auto out = h.sched.submit(std::move(t2));
  EXPECT_EQ(out.killed, (std::vector<TaskId>{g1}));
  EXPECT_EQ(h.sched.find(g1)->state, TaskState::exit(Verdict::Killed));
  ASSERT_EQ(h.terminated.size(), 1u);
  EXPECT_EQ(h.terminated[0].second, (std::set<pid_t>{4242}));
  EXPECT_EQ(h.sched.running_count(), 0u);
  EXPECT_EQ(*h.sched.admit(), out.task_id);
  EXPECT_FALSE(h.sched.register_process(g1, 1));
  // Journal path: Run -> Hanging -> Exit(Killed), reason "superseded".
  std::vector<std::string> path;
  for (const auto& r : h.log)
    if (r.task_id == g1) path.push_back(to_string(r.to) + ":" + r.reason);
  EXPECT_EQ(path, (std::vector<std::string>{"Ready:submitted", "Run:admitted", "Hanging:superseded",
                                            "Exit(Killed):superseded"}));
}

TEST(Scheduler, SupersedeReadyNeverRuns) {
  Harness h(1);
  h.submit(99);  // occupies the single slot
  h.sched.admit();
  const TaskId g1 = h.submit(5);
  const TaskId g2 = h.submit(5);
  const PrTask* t1 = h.sched.find(g1);
  EXPECT_EQ(t1->state, TaskState::exit(Verdict::Killed));
  EXPECT_FALSE(t1->started_at.has_value());
  EXPECT_FALSE(t1->pipeline_result.has_value());
  EXPECT_EQ(h.sched.find(g2)->state, TaskState::ready());
}

TEST(Scheduler, SupersedeWithoutLiveTasks) {
  Harness h;
  EXPECT_TRUE(h.sched.supersede("org/r", 1, 5).empty());
}

TEST(Scheduler, ReclaimOldestStarted) {
  Harness h(3);
  std::vector<TaskId> ids;
  for (std::uint64_t pr = 1; pr <= 3; ++pr) {
    h.submit(pr);
    h.clock.advance(100);
    ids.push_back(*h.sched.admit());
  }
  EXPECT_EQ(h.sched.reclaim_oldest(), ids[0]);
  EXPECT_EQ(h.sched.find(ids[0])->state, TaskState::exit(Verdict::Killed));
  EXPECT_EQ(h.sched.counters().killed_reclaimed, 1u);
}

TEST(Scheduler, ReclaimEmpty) {
  Harness h;
  EXPECT_FALSE(h.sched.reclaim_oldest());
}

TEST(Scheduler, RepeatedReclaimIsAscendingStartedAt) {
  Harness h(8);
  std::mt19937 rng(8);
  for (std::uint64_t pr = 1; pr <= 8; ++pr) h.submit(pr);
  std::vector<std::pair<Nanos, TaskId>> starts;
  for (int i = 0; i < 8; ++i) {
    h.clock.advance(1 + rng() % 3);
    auto id = *h.sched.admit();
    starts.push_back({*h.sched.find(id)->started_at, id});
  }
  std::sort(starts.begin(), starts.end());
  std::vector<TaskId> expected, got;
  for (auto& s : starts) expected.push_back(s.second);
  while (auto id = h.sched.reclaim_oldest()) got.push_back(*id);
  EXPECT_EQ(got, expected);
}

TEST(Scheduler, CancelReadyAndRunning) {
  Harness h(1);
  const TaskId a = h.submit(3);
  h.sched.admit();
  const TaskId b = h.submit(4);
  auto cancelled = h.sched.cancel("org/r", 3);
  EXPECT_EQ(cancelled, (std::vector<TaskId>{a}));
  EXPECT_EQ(h.sched.find(b)->state, TaskState::ready());
  EXPECT_TRUE(h.sched.cancel("org/r", 12345).empty());
}

TEST(Scheduler, CancelBothLiveTasksWithoutSupersession) {
  Harness h(1, {}, false);
  const TaskId a = h.submit(3);
  h.sched.admit();
  const TaskId b = h.submit(3);
  auto ids = h.sched.cancel("org/r", 3);
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(ids, (std::vector<TaskId>{a, b}));
  EXPECT_EQ(h.sched.find(a)->state, TaskState::exit(Verdict::Killed));
  EXPECT_EQ(h.sched.find(b)->state, TaskState::exit(Verdict::Killed));
  EXPECT_TRUE(h.sched.idle());
  EXPECT_EQ(h.sched.counters().killed_cancelled, 2u);
}

TEST(Scheduler, FinishVerdicts) {
  Harness h(2);
  const TaskId a = h.submit(1), b = h.submit(2);
  h.sched.admit();
  h.sched.admit();
  h.sched.on_task_finished(a, h.verdict(PipelineVerdict::Success));
  h.sched.on_task_finished(b, h.verdict(PipelineVerdict::PrebuildFailed));
  EXPECT_EQ(h.sched.find(a)->state, TaskState::exit(Verdict::Pass));
  EXPECT_EQ(h.sched.find(b)->state, TaskState::exit(Verdict::Fail));
  EXPECT_THROW(h.sched.on_task_finished(a, h.verdict(PipelineVerdict::Success)), IllegalState);
  const TaskId c = h.submit(3);
  EXPECT_THROW(h.sched.on_task_finished(c, h.verdict(PipelineVerdict::Success)), IllegalState);
  EXPECT_THROW(h.sched.on_task_finished(999, h.verdict(PipelineVerdict::Success)), UnknownTask);
}

TEST(Scheduler, WaitStateAroundLock) {
  Harness h(1);
  const TaskId a = h.submit(1);
  h.sched.admit();
  h.sched.set_waiting(a, true);
  EXPECT_EQ(h.sched.find(a)->state, TaskState::wait());
  EXPECT_EQ(h.sched.running_count(), 1u);  // still holds its slot
  h.sched.set_waiting(a, false);
  EXPECT_EQ(h.sched.find(a)->state, TaskState::run());
  h.sched.set_waiting(a, true);
  EXPECT_TRUE(h.sched.kill(a, "shutdown"));
  EXPECT_EQ(h.sched.find(a)->state, TaskState::exit(Verdict::Killed));
  EXPECT_FALSE(h.sched.kill(a, "shutdown"));
}

TEST(Scheduler, GenerationStrictlyIncreases) {
  Harness h(1);
  std::map<std::uint64_t, std::uint64_t> last;
  std::mt19937 rng(2);
  for (int i = 0; i < 200; ++i) {
    const std::uint64_t pr = 1 + rng() % 5;
    auto t = h.sched.make_task(make_event("org/r", pr, PrAction::Synchronized, sha_of(i + 1)));
    EXPECT_GT(t.generation, last[pr]);
    last[pr] = t.generation;
    h.sched.submit(std::move(t));
  }
}

TEST(Scheduler, RandomTracesKeepInvariants) {
  std::mt19937 rng(2024);
  for (int trace = 0; trace < 200; ++trace) {
    const std::uint32_t r = 1 + rng() % 4;
    Harness h(r);
    for (int step = 0; step < 60; ++step) {
      h.clock.advance(1 + rng() % 5);
      switch (rng() % 6) {
        case 0:
        case 1:
          h.submit(1 + rng() % 6);
          break;
        case 2:
          h.sched.admit();
          break;
        case 3: {
          auto running = h.sched.snapshot().run_queue;
          if (!running.empty()) {
            const TaskId id = running[rng() % running.size()];
            if (h.sched.find(id)->state == TaskState::run())
              h.sched.on_task_finished(id, h.verdict(rng() % 2 ? PipelineVerdict::Success
                                                                 : PipelineVerdict::PostbuildFailed));
          }
          break;
        }
        case 4:
          h.sched.cancel("org/r", 1 + rng() % 6);
          break;
        case 5:
          h.sched.reclaim_oldest();
          break;
      }
      ASSERT_LE(h.sched.running_count(), r);
      const auto& c = h.sched.counters();
      ASSERT_EQ(c.enqueued, c.passed + c.failed + c.killed + c.live);
    }
    // drain
    for (;;) {
      while (h.sched.admit()) {
      }
      auto running = h.sched.snapshot().run_queue;
      if (running.empty()) break;
      for (TaskId id : running) h.sched.on_task_finished(id, h.verdict(PipelineVerdict::Success));
    }
    check_task_invariants(h.sched);
    std::map<TaskId, TaskState> state;
    for (const auto& rec : h.log) {
      if (rec.from) ASSERT_TRUE(validate_transition(*rec.from, rec.to));
      state[rec.task_id] = rec.to;
    }
    for (auto& [id, s] : state) EXPECT_TRUE(s.terminal()) << "task " << id;
  }
}
