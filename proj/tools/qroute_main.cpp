// qroute command-line driver.
//
// Exit codes: 0 success, 1 configuration error, 2 invariant violation,
// 3 any other runtime failure (I/O and the like).

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qroute/config.hpp"
#include "qroute/simulation.hpp"
#include "qroute/topology.hpp"

namespace fs = std::filesystem;
using namespace qroute;

namespace {

struct Common {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::vector<std::string> sets;  // key=value

  // shortcut flags
  std::optional<std::int64_t> slots;
  std::optional<std::size_t> trials;
  std::optional<std::size_t> nodes;
  std::optional<std::uint64_t> topology_seed;
  std::optional<int> lifetime;
  std::optional<double> swap_prob;
  std::optional<double> alpha;
  std::optional<double> requests;
  std::optional<std::string> ttl;
  std::optional<std::string> selector;
  std::optional<std::string> caching;
  std::optional<std::string> proactive;
  std::optional<std::string> mode;
  bool paper_scale = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON config file (flags override it)");
  cmd->add_option("--out", c.out_dir, "output directory");
  cmd->add_option("--seed", c.seed, "master seed (falls back to $QROUTE_SEED)");
  cmd->add_option("--jobs", c.jobs, "parallel trials");
  cmd->add_option("--set", c.sets, "override any config field, e.g. --set physics.lifetime=5")->take_all();
  cmd->add_option("--slots", c.slots, "slots per trial");
  cmd->add_option("--trials", c.trials, "trials");
  cmd->add_option("--nodes", c.nodes, "topology.n_nodes");
  cmd->add_option("--topology-seed", c.topology_seed, "topology.seed");
  cmd->add_option("--lifetime", c.lifetime, "physics.lifetime");
  cmd->add_option("--swap-prob", c.swap_prob, "physics.swap_prob");
  cmd->add_option("--alpha", c.alpha, "physics.alpha");
  cmd->add_option("--requests", c.requests, "requests.per_slot");
  cmd->add_option("--ttl", c.ttl, "requests.ttl (integer or inf)");
  cmd->add_option("--selector", c.selector, "link_selector: rl|greedy|exact");
  cmd->add_option("--caching", c.caching, "on|off");
  cmd->add_option("--proactive", c.proactive, "on|off");
  cmd->add_option("--mode", c.mode, "shorthand such as rl+cache+proactive");
  cmd->add_flag("--paper-scale", c.paper_scale, "50 nodes, 200000 slots, 10 trials (before other flags)");
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("QROUTE_SEED");
  if (!v || !*v) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto s = std::stoull(v, &used);
    if (used != std::string(v).size()) throw std::invalid_argument(v);
    return s;
  } catch (const std::exception&) {
    throw ConfigError("QROUTE_SEED", "not an unsigned integer: '" + std::string(v) + "'");
  }
}

template <typename T>
std::string text(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) {
    return "\"" + v + "\"";
  } else {
    return nlohmann::json(v).dump();
  }
}

SimConfig build_config(const Common& c) {
  SimConfig cfg;
  bool seed_in_file = false;
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw ConfigError("config", "cannot open " + c.config_path);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config", c.config_path + ": " + e.what());
    }
    cfg = sim_config_from_json(doc);
    seed_in_file = doc.is_object() && doc.contains("seed");
  }
  if (c.seed) {
    cfg.seed = *c.seed;
  } else if (!seed_in_file) {
    if (auto s = env_seed()) cfg.seed = *s;
  }
  auto set = [&](const char* key, const auto& opt) {
    if (opt) set_config_field(cfg, key, text(*opt));
  };
  if (c.paper_scale) {
    cfg.topology.n_nodes = 50;
    cfg.slots = 200000;
    cfg.trials = 10;
  }
  if (c.mode) apply_mode(cfg, *c.mode);
  set("jobs", c.jobs);
  set("slots", c.slots);
  set("trials", c.trials);
  set("topology.n_nodes", c.nodes);
  set("topology.seed", c.topology_seed);
  set("physics.lifetime", c.lifetime);
  set("physics.swap_prob", c.swap_prob);
  set("physics.alpha", c.alpha);
  set("requests.per_slot", c.requests);
  set("link_selector", c.selector);
  set("caching", c.caching);
  set("proactive", c.proactive);
  if (c.ttl) set_config_field(cfg, "requests.ttl", *c.ttl == "inf" ? "\"inf\"" : *c.ttl);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(kv, "expected key=value");
    set_config_field(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << body;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qroute: time-slotted entanglement routing simulator"};
  app.require_subcommand(1);

  Common gen_opts, run_opts, sweep_opts, abl_opts, val_opts;
  auto* gen = app.add_subcommand("gen-topology", "generate a Waxman topology as JSON");
  add_common(gen, gen_opts);
  auto* run = app.add_subcommand("run", "run all trials of one configuration");
  add_common(run, run_opts);
  bool slot_log = false;
  std::string topology_path;
  run->add_flag("--slot-log", slot_log, "also write per-slot reports as JSON lines");
  run->add_option("--topology", topology_path, "load the network instead of generating it");
  auto* swp = app.add_subcommand("sweep", "sweep one axis");
  add_common(swp, sweep_opts);
  std::string axis_name;
  std::string values_spec;
  swp->add_option("--axis", axis_name, "lifetime|requests|swap_prob|alpha|mode")->required();
  swp->add_option("--values", values_spec, "start:stop[:step] or a comma list")->required();
  auto* abl = app.add_subcommand("ablation", "greedy, rl, rl+cache, rl+cache+proactive");
  add_common(abl, abl_opts);
  auto* val = app.add_subcommand("validate-config", "check a config file and exit");
  add_common(val, val_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*gen) {
      const SimConfig cfg = build_config(gen_opts);
      const Network net = generate_waxman(cfg.topology);
      const fs::path out = prepare_out(gen_opts.out_dir);
      save_network(net, out / "topology.json");
      std::cout << "wrote " << (out / "topology.json").string() << " (" << net.n_nodes() << " nodes, "
                << net.n_links() << " links)\n";
    } else if (*run) {
      const SimConfig cfg = build_config(run_opts);
      const Network net = topology_path.empty() ? generate_waxman(cfg.topology) : load_network(topology_path);
      if (net.n_nodes() != cfg.topology.n_nodes)
        throw ConfigError("topology.n_nodes", "does not match the loaded network");
      const fs::path out = prepare_out(run_opts.out_dir);
      std::vector<std::unique_ptr<std::ofstream>> logs;
      SlotSink sink;
      if (slot_log) {
        for (std::size_t t = 0; t < cfg.trials; ++t) {
          logs.push_back(std::make_unique<std::ofstream>(out / ("slots_trial" + std::to_string(t) + ".jsonl")));
        }
        sink = [&](std::size_t trial, const SlotReport& r) { *logs[trial] << slot_report_to_json(r).dump() << '\n'; };
      }
      const RunReport report = run_experiment(cfg, net, sink);
      write_file(out / "run_report.json", run_report_to_json(report, cfg).dump(2) + "\n");
      write_file(out / "timing.json", run_timing_to_json(report).dump(2) + "\n");
      std::printf("%s: success_ratio %.4f (std %.4f) over %zu trials x %lld slots\n", report.mode.c_str(),
                  report.success_ratio, report.success_std, report.trials, static_cast<long long>(report.slots));
    } else if (*swp) {
      const SimConfig cfg = build_config(sweep_opts);
      const SweepAxis axis = sweep_axis_from_string(axis_name);
      const auto values = parse_values(values_spec);
      for (const auto& v : values) (void)apply_axis(cfg, axis, v);
      const auto rows = sweep(cfg, axis, values);
      const fs::path out = prepare_out(sweep_opts.out_dir);
      const std::string csv = sweep_csv(rows);
      write_file(out / ("sweep_" + to_string(axis) + ".csv"), csv);
      std::cout << csv;
    } else if (*abl) {
      const SimConfig cfg = build_config(abl_opts);
      const auto rows = ablation(cfg);
      const fs::path out = prepare_out(abl_opts.out_dir);
      const std::string csv = sweep_csv(rows);
      write_file(out / "ablation.csv", csv);
      std::cout << csv;
    } else if (*val) {
      const SimConfig cfg = build_config(val_opts);
      std::cout << "ok: " << cfg.mode_name() << ", " << cfg.topology.n_nodes << " nodes, " << cfg.slots
                << " slots x " << cfg.trials << " trials\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const TopologyError& e) {
    std::cerr << "config error: topology: " << e.what() << '\n';
    return 1;
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
