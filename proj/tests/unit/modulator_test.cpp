#include <random>

#include <gtest/gtest.h>

#include "lightci/modulator.hpp"
#include "test_support.hpp"

using namespace lightci;
using testsupport::add_plugin;
using testsupport::TempDir;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> names(const std::vector<PluginDescriptor>& plan) {
  std::vector<std::string> out;
  for (const auto& p : plan) out.push_back(p.name);
  return out;
}

// The standard module table, written out independently.
const std::vector<std::string> kPreNames = {
    "clang-format", "cppcheck", "pylint",    "indent",         "doc-tag",    "doc-build",
    "scancode",     "file-size", "newline",  "nobody",         "signed-off", "hardcoded-path",
    "executable",   "timestamp", "sloccount", "flawfinder"};
const std::vector<std::string> kPostNames = {"tizen", "android", "ubuntu", "yocto"};

CheckResult result(CheckStatus s) { return CheckResult{"x", s}; }

}  // namespace

TEST(PluginStore, BuiltinsOnly) {
  TempDir dir;
  auto store = load_store(dir / "plugins", ServiceConfig{});
  EXPECT_EQ(store.plugins().size(), 20u);
  EXPECT_EQ(names(execution_plan(store, Group::PreBuild)), kPreNames);
  EXPECT_EQ(names(execution_plan(store, Group::PostBuild)), kPostNames);
  for (const auto& p : store.plugins()) {
    EXPECT_EQ(p.tier, Tier::Base);
    EXPECT_EQ(p.kind, PluginKind::Builtin);
    EXPECT_EQ(p.timeout_seconds, 600);
  }
  EXPECT_EQ(builtin_modules().size(), 20u);
  EXPECT_EQ(find_builtin("newline")->number, 9);
  EXPECT_EQ(find_builtin("nope"), nullptr);
}

TEST(PluginStore, TierOrderBaseGoodStaging) {
  TempDir dir;
  add_plugin(dir.path(), "staging", "todo", "pre", "exit 0", 60, 1);
  add_plugin(dir.path(), "good", "lint2", "pre", "exit 0", 60, 1);
  add_plugin(dir.path(), "base", "zz-base", "pre", "exit 0", 60, 50);
  auto cfg = testsupport::quiet_config(dir / "state");
  auto store = load_store(dir.path(), cfg);
  auto plan = execution_plan(store, Group::PreBuild);
  EXPECT_EQ(names(plan), (std::vector<std::string>{"zz-base", "lint2", "todo"}));
  EXPECT_EQ(plan[2].tier, Tier::Staging);
  EXPECT_EQ(plan[2].kind, PluginKind::External);
  EXPECT_TRUE(fs::path(plan[2].exec_path).is_absolute() || fs::exists(plan[2].exec_path));
}

TEST(PluginStore, ImplicitOrderFollowsExplicit) {
  TempDir dir;
  add_plugin(dir.path(), "staging", "b-second", "pre", "exit 0");
  add_plugin(dir.path(), "staging", "a-first", "pre", "exit 0");
  add_plugin(dir.path(), "staging", "explicit", "pre", "exit 0", 60, 3);
  auto store = load_store(dir.path(), testsupport::quiet_config(dir / "s"));
  EXPECT_EQ(names(execution_plan(store, Group::PreBuild)),
            (std::vector<std::string>{"explicit", "a-first", "b-second"}));
}

TEST(PluginStore, DuplicateNameRejected) {
  TempDir dir;
  add_plugin(dir.path(), "staging", "newline", "pre", "exit 0");
  EXPECT_THROW(load_store(dir.path(), ServiceConfig{}), DuplicateName);
}

TEST(PluginStore, DuplicateSlotRejected) {
  TempDir dir;
  add_plugin(dir.path(), "good", "one", "pre", "exit 0", 60, 4);
  add_plugin(dir.path(), "good", "two", "pre", "exit 0", 60, 4);
  EXPECT_THROW(load_store(dir.path(), ServiceConfig{}), ManifestError);
}

TEST(PluginStore, ManifestErrors) {
  TempDir dir;
  auto p = add_plugin(dir.path(), "good", "bad", "pre", "exit 0");
  testsupport::write_file(p / "plugin.json", R"({"name": "bad", "group": "pre", "exec": "run.sh"})");
  EXPECT_THROW(load_store(dir.path(), ServiceConfig{}), ManifestError);
  testsupport::write_file(p / "plugin.json", R"({"name": "bad", "group": "sideways", "timeout_seconds": 5, "exec": "run.sh"})");
  EXPECT_THROW(load_store(dir.path(), ServiceConfig{}), ManifestError);
  testsupport::write_file(p / "plugin.json", R"({"name": "bad", "group": "pre", "timeout_seconds": 5, "exec": "missing.sh"})");
  EXPECT_THROW(load_store(dir.path(), ServiceConfig{}), ManifestError);
  testsupport::write_file(p / "plugin.json", "{broken");
  EXPECT_THROW(load_store(dir.path(), ServiceConfig{}), ManifestError);
}

TEST(PluginStore, TogglesAndTimeouts) {
  TempDir dir;
  ServiceConfig cfg;
  cfg.module_toggles["doc-tag"] = false;
  cfg.plugin_timeouts["cppcheck"] = 12;
  auto store = load_store(dir.path(), cfg);
  auto expected = kPreNames;
  expected.erase(std::find(expected.begin(), expected.end(), "doc-tag"));
  EXPECT_EQ(names(execution_plan(store, Group::PreBuild)), expected);
  EXPECT_FALSE(store.find("doc-tag")->enabled);  // retained, disabled
  EXPECT_EQ(store.find("cppcheck")->timeout_seconds, 12);

  cfg.module_toggles["no-such-module"] = true;
  try {
    load_store(dir.path(), cfg);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "module_toggles.no-such-module");
  }
}

TEST(PluginStore, AllDisabledEmptyPlan) {
  TempDir dir;
  auto store = load_store(dir.path(), testsupport::quiet_config(dir / "s"));
  EXPECT_TRUE(execution_plan(store, Group::PreBuild).empty());
  EXPECT_TRUE(execution_plan(store, Group::PostBuild).empty());
}

TEST(PluginStore, PlanIsStable) {
  TempDir dir;
  add_plugin(dir.path(), "staging", "s1", "post", "exit 0");
  add_plugin(dir.path(), "good", "g1", "post", "exit 0");
  auto a = names(execution_plan(load_store(dir.path(), ServiceConfig{}), Group::PostBuild));
  for (int i = 0; i < 5; ++i)
    EXPECT_EQ(names(execution_plan(load_store(dir.path(), ServiceConfig{}), Group::PostBuild)), a);
}

TEST(StatusState, Mapping) {
  EXPECT_EQ(commit_status_state(result(CheckStatus::Pass)), "success");
  EXPECT_EQ(commit_status_state(result(CheckStatus::Skipped)), "success");
  EXPECT_EQ(commit_status_state(result(CheckStatus::Fail)), "failure");
  EXPECT_EQ(commit_status_state(result(CheckStatus::TimedOut)), "error");
  EXPECT_EQ(commit_status_state(result(CheckStatus::Crashed)), "error");
  auto advisory = result(CheckStatus::Fail);
  advisory.advisory = true;
  EXPECT_EQ(commit_status_state(advisory), "success");
}

TEST(CodeHost, CommentSingleRequest) {
  testsupport::MockCodeHost host;
  CodeHostClient c(host.base_url(), std::string("tok"), std::chrono::milliseconds(1));
  c.comment("org/r", 5, "hi");
  auto reqs = host.requests();
  ASSERT_EQ(reqs.size(), 1u);
  EXPECT_EQ(reqs[0].path, "/repos/org/r/issues/5/comments");
  EXPECT_EQ(reqs[0].body["body"], "hi");
  EXPECT_EQ(reqs[0].authorization, "Bearer tok");
}

TEST(CodeHost, RetriesThenSucceeds) {
  testsupport::MockCodeHost host;
  host.fail_next(2, 500);
  CodeHostClient c(host.base_url(), {}, std::chrono::milliseconds(1));
  EXPECT_NO_THROW(c.comment("org/r", 5, "hi"));
  EXPECT_EQ(host.requests().size(), 3u);
  EXPECT_EQ(c.requests_sent(), 3u);
}

TEST(CodeHost, GivesUpAfterRetries) {
  testsupport::MockCodeHost host;
  host.fail_next(4, 503);
  CodeHostClient c(host.base_url(), {}, std::chrono::milliseconds(1));
  EXPECT_THROW(c.comment("org/r", 5, "hi"), CommentFailed);
  EXPECT_EQ(host.requests().size(), 4u);
}

TEST(CodeHost, ClientErrorNotRetried) {
  testsupport::MockCodeHost host;
  host.fail_next(1, 404);
  CodeHostClient c(host.base_url(), {}, std::chrono::milliseconds(1));
  EXPECT_THROW(c.report("org/r", std::string(40, 'a'), "indent", "pending"), ReportFailed);
  EXPECT_EQ(host.requests().size(), 1u);
}

TEST(CodeHost, ReportBody) {
  testsupport::MockCodeHost host;
  CodeHostClient c(host.base_url() + "/", {}, std::chrono::milliseconds(1));
  const std::string sha(40, 'b');
  c.report("org/r", sha, "indent", "failure", std::string(300, 'd'), "http://x/y");
  auto r = host.requests().at(0);
  EXPECT_EQ(r.path, "/repos/org/r/statuses/" + sha);
  EXPECT_EQ(r.body["state"], "failure");
  EXPECT_EQ(r.body["context"], "lightci/indent");
  EXPECT_EQ(r.body["description"].get<std::string>().size(), 140u);
  EXPECT_EQ(r.body["target_url"], "http://x/y");
}

TEST(CodeHost, UnreachableHost) {
  CodeHostClient c("http://127.0.0.1:1", {}, std::chrono::milliseconds(1));
  EXPECT_THROW(c.comment("o/r", 1, "x"), CommentFailed);
  EXPECT_EQ(c.requests_sent(), 4u);
  CodeHostClient off("");
  EXPECT_FALSE(off.configured());
  EXPECT_NO_THROW(off.comment("o/r", 1, "x"));
}

namespace {

PluginStore staging_store(const TempDir& dir) {
  add_plugin(dir.path(), "staging", "todo", "pre", "exit 0");
  return load_store(dir.path(), testsupport::quiet_config(dir / "s"));
}

}  // namespace

TEST(Aging, EligibleAtWindow) {
  TempDir dir;
  auto store = staging_store(dir);
  AgingTracker t(store, 30);
  EXPECT_FALSE(t.promotion_eligible("todo"));
  for (int i = 1; i <= 30; ++i) {
    t.record_aging("todo", result(CheckStatus::Pass));
    EXPECT_EQ(t.promotion_eligible("todo"), i >= 30) << "run " << i;
  }
}

TEST(Aging, FailureResets) {
  TempDir dir;
  auto store = staging_store(dir);
  AgingTracker t(store, 30);
  for (int i = 0; i < 29; ++i) t.record_aging("todo", result(CheckStatus::Pass));
  auto rec = t.record_aging("todo", result(CheckStatus::Fail));
  EXPECT_EQ(rec.consecutive_clean_runs, 0u);
  EXPECT_TRUE(rec.last_failure_at.has_value());
  EXPECT_FALSE(t.promotion_eligible("todo"));
}

TEST(Aging, CounterIsTrailingCleanSuffix) {
  TempDir dir;
  auto store = staging_store(dir);
  std::mt19937 rng(31);
  const CheckStatus kinds[] = {CheckStatus::Pass, CheckStatus::Pass, CheckStatus::Pass, CheckStatus::Fail,
                               CheckStatus::Skipped, CheckStatus::TimedOut, CheckStatus::Crashed};
  for (int trial = 0; trial < 200; ++trial) {
    AgingTracker t(store, 5);
    std::vector<CheckStatus> seq;
    for (int i = 0, n = rng() % 40; i < n; ++i) {
      seq.push_back(kinds[rng() % 7]);
      t.record_aging("todo", result(seq.back()));
    }
    // Brute force: scan backwards, skipping Skipped, counting Pass until any other result.
    std::uint64_t expected = 0;
    for (auto it = seq.rbegin(); it != seq.rend(); ++it) {
      if (*it == CheckStatus::Skipped) continue;
      if (*it != CheckStatus::Pass) break;
      ++expected;
    }
    ASSERT_EQ(t.get("todo").consecutive_clean_runs, expected);
  }
}

TEST(Aging, Errors) {
  TempDir dir;
  auto store = staging_store(dir);
  AgingTracker t(store, 3);
  EXPECT_THROW(t.promotion_eligible("indent"), NotStaging);
  EXPECT_THROW(t.promotion_eligible("ghost"), UnknownPlugin);
  EXPECT_THROW(t.record_aging("ghost", result(CheckStatus::Pass)), UnknownPlugin);
}

TEST(Aging, PersistsAcrossRestart) {
  TempDir dir;
  auto store = staging_store(dir);
  {
    AgingTracker t(store, 3, dir / "aging.json");
    for (int i = 0; i < 3; ++i) t.record_aging("todo", result(CheckStatus::Pass));
  }
  AgingTracker again(store, 3, dir / "aging.json");
  EXPECT_EQ(again.get("todo").consecutive_clean_runs, 3u);
  EXPECT_TRUE(again.promotion_eligible("todo"));
}
