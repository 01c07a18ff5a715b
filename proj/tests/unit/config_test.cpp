#include <random>

#include <gtest/gtest.h>

#include "lightci/config.hpp"
#include "test_support.hpp"

using namespace lightci;
using testsupport::TempDir;
using testsupport::write_file;

TEST(Config, DefaultsApplied) {
  auto cfg = parse_config_text(R"({"repositories": [{"repo_id": "org/a", "clone_url": "/tmp/a"}]})");
  EXPECT_EQ(cfg.max_run_queue, 4u);
  EXPECT_EQ(cfg.aging_window, 30u);
  EXPECT_EQ(cfg.thresholds.file_size_limit_bytes, 5'242'880u);
  EXPECT_EQ(cfg.thresholds.hardcoded_path_patterns, (std::vector<std::string>{"/home/", "/root/"}));
  EXPECT_EQ(cfg.thresholds.timestamp_skew_seconds, 86'400);
  EXPECT_EQ(cfg.default_timeout_seconds, 600u);
  EXPECT_FALSE(cfg.webhook_secret.has_value());
  EXPECT_EQ(cfg.repositories.at(0).default_branch, "main");
  EXPECT_EQ(cfg.effective_plugins_dir(), cfg.state_dir / "plugins");
}

TEST(Config, ZeroRunQueueNamesField) {
  try {
    parse_config_text(R"({"max_run_queue": 0})");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "max_run_queue");
  }
}

TEST(Config, NestedFieldPath) {
  try {
    parse_config_text(R"({"thresholds": {"file_size_limit_bytes": 0}})");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "thresholds.file_size_limit_bytes");
  }
  try {
    parse_config_text(R"({"repositories": [{"repo_id": "x"}]})");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "repositories[0].clone_url");
  }
}

TEST(Config, MalformedIsParseError) {
  EXPECT_THROW(parse_config_text("{not json"), ParseError);
  EXPECT_THROW(parse_config_text("{\"max_run_queue\": 4, // comment\n}"), ParseError);
}

TEST(Config, LoadFromFile) {
  TempDir dir;
  write_file(dir / "c.json", R"({"max_run_queue": 7, "listen_address": "0.0.0.0:9000"})");
  auto cfg = load_config(dir / "c.json");
  EXPECT_EQ(cfg.max_run_queue, 7u);
  EXPECT_EQ(split_listen_address(cfg.listen_address), (std::pair<std::string, int>{"0.0.0.0", 9000}));
  EXPECT_THROW(load_config(dir / "missing.json"), ParseError);
}

TEST(Config, ListenAddress) {
  EXPECT_THROW(split_listen_address("nohost"), ValidationError);
  EXPECT_THROW(split_listen_address("h:99999"), ValidationError);
  EXPECT_EQ(split_listen_address("127.0.0.1:0").second, 0);
}

namespace {

std::string rand_word(std::mt19937& rng) {
  static const char* kWords[] = {"alpha", "beta", "gamma", "delta", "omega", "zeta", "eta", "theta"};
  return kWords[rng() % 8] + std::to_string(rng() % 100);
}

ServiceConfig random_config(std::mt19937& rng) {
  ServiceConfig c;
  const int repos = rng() % 4;
  for (int i = 0; i < repos; ++i)
    c.repositories.push_back({"org/" + rand_word(rng) + std::to_string(i), "/srv/" + rand_word(rng), rand_word(rng)});
  c.max_run_queue = 1 + rng() % 16;
  if (rng() % 2) c.webhook_secret = rand_word(rng);
  for (int i = 0; i < static_cast<int>(rng() % 4); ++i) c.module_toggles[rand_word(rng)] = rng() % 2;
  c.thresholds.file_size_limit_bytes = 1 + rng() % 100000;
  c.thresholds.hardcoded_path_patterns = {"/" + rand_word(rng) + "/"};
  c.thresholds.timestamp_skew_seconds = 1 + rng() % 1000;
  c.thresholds.executable_allowlist = {"." + rand_word(rng)};
  if (rng() % 2) c.thresholds.sloc_max = rng() % 5000 + 1;
  c.aging_window = 1 + rng() % 50;
  c.listen_address = "127.0.0.1:" + std::to_string(rng() % 60000);
  c.code_host_base_url = rng() % 2 ? "http://127.0.0.1:" + std::to_string(rng() % 60000) : "";
  c.state_dir = "/var/lib/" + rand_word(rng);
  if (rng() % 2) c.wait_queue_capacity = 1 + rng() % 100;
  if (rng() % 2) c.admin_token = rand_word(rng);
  if (rng() % 2) c.code_host_token = rand_word(rng);
  if (rng() % 2) c.plugins_dir = "/opt/" + rand_word(rng);
  c.default_timeout_seconds = 1 + rng() % 1000;
  if (rng() % 2) c.plugin_timeouts[rand_word(rng)] = 1 + rng() % 100;
  c.kill_grace_seconds = (rng() % 100) / 10.0;
  c.shutdown_grace_seconds = (rng() % 100) / 4.0;
  c.lock_timeout_seconds = 1 + (rng() % 100) / 2.0;
  c.memory_budget_bytes = rng() % 2 ? 0 : rng();
  c.http_retry_base_ms = rng() % 1000;
  if (rng() % 2) c.tools["cppcheck"] = ToolSpec{"cppcheck", {"cppcheck", "{files}"}, {0, 1}, {".c", ".cpp"}};
  if (rng() % 2) c.build_stubs["tizen"] = BuildStub{(rng() % 10) / 2.0, (rng() % 5) / 4.0};
  return c;
}

}  // namespace

TEST(Config, SerializeRoundTripIsIdentity) {
  std::mt19937 rng(99);
  for (int i = 0; i < 300; ++i) {
    ServiceConfig c = random_config(rng);
    ServiceConfig back = parse_config_text(serialize_config(c));
    ASSERT_EQ(back, c) << serialize_config(c);
  }
}

TEST(Config, EmptySecretMeansNone) {
  auto cfg = parse_config_text(R"({"webhook_secret": ""})");
  EXPECT_FALSE(cfg.webhook_secret.has_value());
}

TEST(Config, DuplicateRepository) {
  EXPECT_THROW(parse_config_text(R"({"repositories": [{"repo_id": "a", "clone_url": "x"},
                                                     {"repo_id": "a", "clone_url": "y"}]})"),
               ValidationError);
}

TEST(Config, SchemaDocumentsEverySerializedKey) {
  auto schema = nlohmann::json::parse(testsupport::read_file(std::string(LIGHTCI_DOCS) + "/config.schema.json"));
  ServiceConfig cfg;
  cfg.repositories = {RepoEntry{"org/a", "u", "main"}};
  cfg.tools["cppcheck"] = ToolSpec{"cppcheck", {"cppcheck"}, {0}, {".c"}};
  cfg.build_stubs["tizen"] = BuildStub{};
  const auto& props = schema["properties"];
  const auto doc = to_json(cfg);
  for (const auto& [key, value] : doc.items()) {
    EXPECT_TRUE(props.contains(key)) << key;
    if (key == "thresholds")
      for (const auto& [k, v] : value.items()) EXPECT_TRUE(props["thresholds"]["properties"].contains(k)) << k;
  }
  EXPECT_EQ(parse_config(to_json(cfg)), cfg);
}
