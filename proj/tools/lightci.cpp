// lightci: serve | check | sim {generate,replay,compare}

#include <csignal>
#include <fstream>
#include <iostream>

#include <pthread.h>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "lightci/config.hpp"
#include "lightci/daemon.hpp"
#include "lightci/modulator.hpp"
#include "lightci/simulator.hpp"

using namespace lightci;

namespace {

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  out << text;
  if (!out) throw Error("cannot write " + path);
}

WorkloadSpec spec_from(const std::string& path) {
  return path.empty() || path == "default" ? default_workload() : load_workload(path);
}

int serve(const std::string& config_path) {
  ServiceConfig cfg = load_config(config_path);
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGTERM);
  sigaddset(&set, SIGINT);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);  // inherited by every thread started below

  Daemon daemon(cfg);
  daemon.start();
  std::cout << "listening on " << daemon.base_url() << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  spdlog::info("signal {}: draining", sig);
  daemon.stop();
  return 0;
}

int check(const std::string& config_path) {
  ServiceConfig cfg = load_config(config_path);
  split_listen_address(cfg.listen_address);
  PluginStore store = load_store(cfg.effective_plugins_dir(), cfg);
  std::size_t enabled = 0;
  for (const auto& p : store.plugins()) enabled += p.enabled;
  std::cout << "config ok: " << cfg.repositories.size() << " repositories, " << store.plugins().size()
            << " plugins (" << enabled << " enabled), max_run_queue " << cfg.max_run_queue << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lightweight pull-request CI service"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  std::string config_path;
  auto* serve_cmd = app.add_subcommand("serve", "run the webhook daemon");
  serve_cmd->add_option("--config", config_path, "service config (JSON)")->required();
  auto* check_cmd = app.add_subcommand("check", "validate a config and its plugin store");
  check_cmd->add_option("--config", config_path, "service config (JSON)")->required();

  auto* sim = app.add_subcommand("sim", "workload simulator");
  sim->require_subcommand(1);
  std::string spec_path, out_path, csv_path, policy = "lightsys";
  double stub_cost = 0;
  auto* gen = sim->add_subcommand("generate", "emit the synthetic event trace");
  auto* rep = sim->add_subcommand("replay", "replay the trace under one policy");
  auto* cmp = sim->add_subcommand("compare", "replay under both policies");
  for (auto* c : {gen, rep, cmp}) {
    c->add_option("--spec", spec_path, "workload spec (JSON); 'default' or absent for the built-in one");
    c->add_option("--out", out_path, "output file ('-' for stdout)");
  }
  rep->add_option("--policy", policy, "baseline | lightsys");
  for (auto* c : {rep, cmp})
    c->add_option("--stub-cost", stub_cost, "seconds per stub module in integration mode");
  cmp->add_option("--csv", csv_path, "makespan curve as CSV");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*serve_cmd) return serve(config_path);
    if (*check_cmd) return check(config_path);
    const WorkloadSpec spec = spec_from(spec_path);
    ReplayOptions ro;
    ro.integration_module_cost_s = stub_cost;
    if (*gen) {
      write_out(out_path, trace_to_json(generate_trace(spec)).dump(2) + "\n");
    } else if (*rep) {
      auto m = replay(spec, generate_trace(spec), parse_policy(policy), ro);
      write_out(out_path, to_json(m).dump(2) + "\n");
    } else if (*cmp) {
      auto c = compare(spec, ro);
      std::cout << comparison_table(c);
      if (!out_path.empty()) write_out(out_path, to_json(c).dump(2) + "\n");
      if (!csv_path.empty()) write_out(csv_path, curve_csv(c));
    }
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const BindError& e) {
    std::cerr << "bind error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
