#include "qroute/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "qroute/config.hpp"

namespace qroute {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::int64_t decay_steps(const SimConfig& c) {
  return std::max<std::int64_t>(1, std::llround(c.epsilon_decay_fraction * static_cast<double>(c.slots)));
}

TrainConfig scheduled(TrainConfig t, const SimConfig& c) {
  t.epsilon_decay_steps = decay_steps(c);
  return t;
}

}  // namespace

std::string to_string(LinkSelector s) {
  switch (s) {
    case LinkSelector::Rl: return "rl";
    case LinkSelector::Greedy: return "greedy";
    case LinkSelector::Exact: return "exact";
  }
  return "?";
}

LinkSelector link_selector_from_string(const std::string& s) {
  if (s == "rl") return LinkSelector::Rl;
  if (s == "greedy") return LinkSelector::Greedy;
  if (s == "exact") return LinkSelector::Exact;
  throw ConfigError("link_selector", "expected rl|greedy|exact, got '" + s + "'");
}

void SimConfig::validate() const {
  topology.validate();
  physics.validate();
  link_agent.validate("link_agent");
  swap_agent.validate("swap_agent");
  reserve.validate();
  if (routing.redundancy < 1) throw ConfigError("routing.redundancy", "must be at least 1");
  if (exact.redundancy < 1) throw ConfigError("exact.redundancy", "must be at least 1");
  if (exact.paths_per_request < 1) throw ConfigError("exact.paths_per_request", "must be at least 1");
  if (!(requests.per_slot >= 0.0) || !std::isfinite(requests.per_slot))
    throw ConfigError("requests.per_slot", "must be a finite value >= 0");
  if (requests.model == ArrivalModel::Fixed && requests.per_slot != std::floor(requests.per_slot))
    throw ConfigError("requests.per_slot", "must be an integer for the fixed arrival model");
  if (requests.ttl < 1) throw ConfigError("requests.ttl", "must be at least 1 slot or \"inf\"");
  if (requests.per_slot > 0 && topology.n_nodes < 2)
    throw ConfigError("topology.n_nodes", "requests need at least 2 nodes");
  if (slots < 1) throw ConfigError("slots", "must be at least 1");
  if (trials < 1) throw ConfigError("trials", "must be at least 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
    throw ConfigError("warmup_fraction", "must lie in [0, 1)");
  if (!(epsilon_decay_fraction >= 0.0 && epsilon_decay_fraction <= 1.0))
    throw ConfigError("epsilon_decay_fraction", "must lie in [0, 1]");
  if (jobs < 1) throw ConfigError("jobs", "must be at least 1");
  if (link_selector == LinkSelector::Exact && topology.n_nodes > exact.max_nodes)
    throw ConfigError("exact.max_nodes", "network has " + std::to_string(topology.n_nodes) +
                                             " nodes; the exact selector accepts at most " +
                                             std::to_string(exact.max_nodes));
}

std::string SimConfig::mode_name() const {
  std::string m = to_string(link_selector);
  if (caching) m += "+cache";
  if (proactive) m += "+proactive";
  return m;
}

void apply_mode(SimConfig& config, const std::string& mode) {
  std::vector<std::string> parts;
  std::stringstream ss(mode);
  for (std::string tok; std::getline(ss, tok, '+');) parts.push_back(tok);
  if (parts.empty()) throw ConfigError("mode", "empty mode");
  try {
    config.link_selector = link_selector_from_string(parts[0]);
  } catch (const ConfigError&) {
    throw ConfigError("mode", "unknown selector in '" + mode + "'");
  }
  config.caching = false;
  config.proactive = false;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i] == "cache") {
      config.caching = true;
    } else if (parts[i] == "proactive") {
      config.proactive = true;
    } else {
      throw ConfigError("mode", "unknown component '" + parts[i] + "' in '" + mode + "'");
    }
  }
}

json slot_report_to_json(const SlotReport& r) {
  json j = {{"slot", r.slot},
            {"new", r.new_requests},
            {"served", r.served},
            {"dropped", r.dropped},
            {"pending_start", r.pending_start},
            {"pending_end", r.pending_end},
            {"attempts", r.attempts},
            {"truncated", r.truncated},
            {"created", r.created},
            {"consumed", r.consumed},
            {"expired", r.expired},
            {"segments_created", r.segments_created},
            {"proactive_failed", r.proactive_failed},
            {"paths_skipped", r.paths_skipped},
            {"live", r.live_end},
            {"live_by_age", r.live_by_age},
            {"memory_used", r.memory_used},
            {"epsilon", r.epsilon}};
  j["link_loss"] = r.link_loss ? json(*r.link_loss) : json(nullptr);
  j["swap_loss"] = r.swap_loss ? json(*r.swap_loss) : json(nullptr);
  return j;
}

Simulator::Simulator(const SimConfig& config, const Network& net, std::uint64_t seed)
    : config_(config),
      net_(net),
      physics_(config.physics),
      pool_(net),
      request_rng_(derive_seed(seed, 0)),
      physics_rng_(derive_seed(seed, 1)),
      link_rng_(derive_seed(seed, 4)),
      swap_rng_(derive_seed(seed, 5)) {
  physics_.lifetime = config.effective_lifetime();
  if (config.link_selector == LinkSelector::Rl) {
    link_agent_ = std::make_unique<LinkSelectAgent>(net, scheduled(config.link_agent, config), config.rewards,
                                                    derive_seed(seed, 2));
  }
  if (config.proactive) {
    swap_agent_ = std::make_unique<ProactiveSwapAgent>(net, scheduled(config.swap_agent, config), config.rewards,
                                                       config.reserve, derive_seed(seed, 3));
  }
}

Simulator::~Simulator() = default;

void Simulator::inject_requests(SlotReport& report) {
  const std::size_t n = net_.n_nodes();
  std::size_t count = 0;
  if (config_.requests.model == ArrivalModel::Fixed) {
    count = static_cast<std::size_t>(config_.requests.per_slot);
  } else if (config_.requests.per_slot > 0.0) {
    std::poisson_distribution<std::size_t> dist(config_.requests.per_slot);
    count = dist(request_rng_.engine());
  }
  if (count == 0 || n < 2) return;
  // Distinct unordered pairs within a slot while enough pairs exist.
  const std::size_t n_pairs = n * (n - 1) / 2;
  std::set<NodePair> drawn;
  for (std::size_t k = 0; k < count; ++k) {
    NodeId s = 0;
    NodeId d = 0;
    do {
      s = static_cast<NodeId>(request_rng_.uniform_int(0, static_cast<std::int64_t>(n) - 1));
      d = static_cast<NodeId>(request_rng_.uniform_int(0, static_cast<std::int64_t>(n) - 2));
      if (d >= s) ++d;
    } while (drawn.size() < n_pairs && drawn.contains(NodePair(s, d)));
    drawn.insert(NodePair(s, d));
    Request r;
    r.id = next_request_++;
    r.source = s;
    r.destination = d;
    r.arrival_slot = report.slot;
    r.ttl_slots = config_.requests.ttl;
    requests_.push_back(r);
  }
  report.new_requests = count;
}

std::vector<LinkAction> Simulator::select_links() {
  switch (config_.link_selector) {
    case LinkSelector::Rl:
      return link_agent_->select(pool_, requests_, epsilon_at(link_agent_->train_config(), next_slot_), link_rng_);
    case LinkSelector::Greedy:
      return baseline_greedy_select(net_, pool_, requests_);
    case LinkSelector::Exact: {
      const std::size_t k = std::min(requests_.size(), config_.exact.max_requests);
      std::vector<Request> oldest(requests_.begin(), requests_.begin() + static_cast<std::ptrdiff_t>(k));
      return baseline_exact_select(net_, physics_, pool_, oldest, config_.exact);
    }
  }
  return {};
}

SlotReport Simulator::run_slot() {
  SlotReport rep;
  rep.slot = next_slot_;
  if (next_slot_ > 0) pool_.advance_slot();
  pool_.reset_slot_channels();

  const auto expired = pool_.expire_cache(physics_);
  rep.expired = expired.size();
  std::vector<ResourceId> lost = lineage_ids(expired);

  rep.pending_start = requests_.size();
  rep.dropped = age_requests(requests_, rep.slot).size();
  std::erase_if(requests_, [](const Request& r) { return r.status != RequestStatus::Pending; });
  inject_requests(rep);

  // link selection and entanglement generation
  auto t0 = Clock::now();
  const auto actions = select_links();
  rep.link_select_ms = ms_since(t0);
  if (link_agent_) rep.epsilon = epsilon_at(link_agent_->train_config(), next_slot_);
  for (const auto& act : actions) {
    const int n = clamp_to_channels(pool_, act.link, act.n_channels);
    const AttemptResult ar = pool_.attempt_entanglement(physics_, act.link, n, physics_rng_);
    rep.attempts += static_cast<std::size_t>(ar.attempted);
    rep.truncated += static_cast<std::size_t>(ar.truncated);
    rep.created += ar.created.size();
    if (link_agent_) link_agent_->record(act, ar.created);
  }

  // proactive swapping
  t0 = Clock::now();
  if (swap_agent_) {
    const std::size_t live_before = pool_.live_count();
    const double eps = epsilon_at(scheduled(config_.swap_agent, config_), next_slot_);
    auto step = swap_agent_->step(pool_, physics_, requests_, eps, swap_rng_);
    rep.segments_created = step.committed;
    rep.proactive_failed = step.failed;
    rep.consumed += live_before + step.committed - pool_.live_count();
    lost.insert(lost.end(), step.lost.begin(), step.lost.end());
    std::sort(lost.begin(), lost.end());
    lost.erase(std::unique(lost.begin(), lost.end()), lost.end());
  }
  rep.proactive_ms = ms_since(t0);

  // routing
  t0 = Clock::now();
  const std::size_t live_before_routing = pool_.live_count();
  const EntangledGraph graph = build_entangled_graph(pool_);
  const auto assignment = select_paths(graph, requests_, config_.routing);
  const auto outcomes = execute_paths(pool_, physics_, requests_, assignment, physics_rng_);
  std::vector<EntangledResource> consumed;
  for (const auto& o : outcomes) {
    rep.served += o.served ? 1 : 0;
    rep.paths_skipped += static_cast<std::size_t>(o.paths_skipped);
    consumed.insert(consumed.end(), o.consumed.begin(), o.consumed.end());
  }
  rep.consumed += live_before_routing - pool_.live_count();
  std::erase_if(requests_, [](const Request& r) { return r.status != RequestStatus::Pending; });
  rep.routing_ms = ms_since(t0);

  // rewards and training
  t0 = Clock::now();
  const std::vector<ResourceId> used = lineage_ids(consumed);
  if (link_agent_) {
    link_transitions_ += link_agent_->settle(pool_, requests_, used, lost);
    if (auto r = link_agent_->train(link_rng_)) rep.link_loss = r->loss;
  }
  if (swap_agent_) {
    swap_transitions_ += swap_agent_->settle(pool_, requests_, used, lost);
    if (auto r = swap_agent_->train(swap_rng_)) rep.swap_loss = r->loss;
  }
  rep.train_ms = ms_since(t0);

  rep.pending_end = requests_.size();
  if (rep.served + rep.dropped + rep.pending_end != rep.pending_start + rep.new_requests) {
    throw InvariantViolation("request conservation failed: served " + std::to_string(rep.served) + " + dropped " +
                             std::to_string(rep.dropped) + " + pending " + std::to_string(rep.pending_end) +
                             " != " + std::to_string(rep.pending_start) + " + new " +
                             std::to_string(rep.new_requests));
  }
  if (config_.check_invariants) pool_.check_invariants(physics_);

  rep.live_end = pool_.live_count();
  rep.live_by_age.assign(static_cast<std::size_t>(physics_.lifetime), 0);
  for (const auto& [id, r] : pool_.live()) {
    const auto age = static_cast<std::size_t>(rep.slot - r.birth_slot);
    if (age >= rep.live_by_age.size()) throw InvariantViolation("resource " + std::to_string(id) + " outlived its lifetime");
    ++rep.live_by_age[age];
  }
  rep.memory_used.resize(net_.n_nodes());
  for (NodeId n = 0; n < net_.n_nodes(); ++n) rep.memory_used[n] = pool_.memory_used(n);

  ++next_slot_;
  return rep;
}

std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t trial) { return mix64(master_seed + trial); }

TrialReport run_trial(const SimConfig& config, const Network& net, std::size_t trial, const SlotSink& sink) {
  TrialReport out;
  out.trial = trial;
  out.seed = trial_seed(config.seed, trial);
  Simulator sim(config, net, out.seed);
  const auto warmup = static_cast<SlotIndex>(std::floor(config.warmup_fraction * static_cast<double>(config.slots)));
  double link_ms = 0.0;
  double proactive_ms = 0.0;
  double slot_ms = 0.0;
  for (SlotIndex s = 0; s < config.slots; ++s) {
    const auto t0 = Clock::now();
    SlotReport rep;
    try {
      rep = sim.run_slot();
    } catch (const InvariantViolation& e) {
      throw InvariantViolation("trial " + std::to_string(trial) + ", slot " + std::to_string(s) + ": " + e.what());
    }
    slot_ms += ms_since(t0);
    link_ms += rep.link_select_ms;
    proactive_ms += rep.proactive_ms;
    out.served_all += rep.served;
    out.dropped_all += rep.dropped;
    if (s >= warmup) {
      out.served += rep.served;
      out.dropped += rep.dropped;
    }
    out.segments_created += rep.segments_created;
    out.expired += rep.expired;
    if (sink) sink(trial, rep);
  }
  const auto ratio = [](std::size_t served, std::size_t dropped) {
    const std::size_t den = served + dropped;
    return den == 0 ? 1.0 : static_cast<double>(served) / static_cast<double>(den);
  };
  out.vacuous = out.served + out.dropped == 0;
  out.success_ratio = ratio(out.served, out.dropped);
  out.success_ratio_all = ratio(out.served_all, out.dropped_all);
  const auto slots = static_cast<double>(config.slots);
  out.link_select_ms_mean = link_ms / slots;
  out.proactive_ms_mean = proactive_ms / slots;
  out.slot_ms_mean = slot_ms / slots;
  return out;
}

RunReport run_experiment(const SimConfig& config, const Network& net, const SlotSink& sink) {
  config.validate();
  RunReport rep;
  rep.mode = config.mode_name();
  rep.slots = config.slots;
  rep.trials = config.trials;
  rep.seed = config.seed;
  rep.per_trial.resize(config.trials);

  std::vector<std::exception_ptr> errors(config.trials);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < config.trials; t = next++) {
      try {
        rep.per_trial[t] = run_trial(config, net, t, sink);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::min(config.jobs, config.trials);
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  double sum = 0.0;
  double sum_all = 0.0;
  double link_ms = 0.0;
  for (const auto& t : rep.per_trial) {
    sum += t.success_ratio;
    sum_all += t.success_ratio_all;
    link_ms += t.link_select_ms_mean;
  }
  const auto n = static_cast<double>(config.trials);
  rep.success_ratio = sum / n;
  rep.success_ratio_all = sum_all / n;
  rep.link_select_ms_mean = link_ms / n;
  if (config.trials > 1) {
    double ss = 0.0;
    for (const auto& t : rep.per_trial) ss += (t.success_ratio - rep.success_ratio) * (t.success_ratio - rep.success_ratio);
    rep.success_std = std::sqrt(ss / (n - 1.0));
  }
  return rep;
}

RunReport run_experiment(const SimConfig& config) {
  config.validate();
  const Network net = generate_waxman(config.topology);
  return run_experiment(config, net);
}

json run_report_to_json(const RunReport& report, const SimConfig& config) {
  json trials = json::array();
  for (const auto& t : report.per_trial) {
    trials.push_back({{"trial", t.trial},
                      {"seed", t.seed},
                      {"served", t.served},
                      {"dropped", t.dropped},
                      {"served_all", t.served_all},
                      {"dropped_all", t.dropped_all},
                      {"success_ratio", t.success_ratio},
                      {"success_ratio_all", t.success_ratio_all},
                      {"vacuous", t.vacuous},
                      {"segments_created", t.segments_created},
                      {"expired", t.expired}});
  }
  return {{"mode", report.mode},
          {"slots", report.slots},
          {"trials", report.trials},
          {"seed", report.seed},
          {"success_ratio", report.success_ratio},
          {"success_std", report.success_std},
          {"success_ratio_all", report.success_ratio_all},
          {"warmup_slots",
           static_cast<std::int64_t>(std::floor(config.warmup_fraction * static_cast<double>(config.slots)))},
          {"per_trial", trials},
          {"config", sim_config_to_json(config)}};
}

json run_timing_to_json(const RunReport& report) {
  json trials = json::array();
  for (const auto& t : report.per_trial) {
    trials.push_back({{"trial", t.trial},
                      {"link_select_ms_mean", t.link_select_ms_mean},
                      {"proactive_ms_mean", t.proactive_ms_mean},
                      {"slot_ms_mean", t.slot_ms_mean}});
  }
  return {{"mode", report.mode}, {"link_select_ms_mean", report.link_select_ms_mean}, {"per_trial", trials}};
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "lifetime") return SweepAxis::Lifetime;
  if (s == "requests") return SweepAxis::Requests;
  if (s == "swap_prob") return SweepAxis::SwapProb;
  if (s == "alpha") return SweepAxis::Alpha;
  if (s == "mode") return SweepAxis::Mode;
  throw ConfigError("axis", "expected lifetime|requests|swap_prob|alpha|mode, got '" + s + "'");
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Lifetime: return "lifetime";
    case SweepAxis::Requests: return "requests";
    case SweepAxis::SwapProb: return "swap_prob";
    case SweepAxis::Alpha: return "alpha";
    case SweepAxis::Mode: return "mode";
  }
  return "?";
}

SimConfig apply_axis(const SimConfig& base, SweepAxis axis, const std::string& value) {
  SimConfig c = base;
  switch (axis) {
    case SweepAxis::Lifetime: set_config_field(c, "physics.lifetime", value); break;
    case SweepAxis::Requests: set_config_field(c, "requests.per_slot", value); break;
    case SweepAxis::SwapProb: set_config_field(c, "physics.swap_prob", value); break;
    case SweepAxis::Alpha: set_config_field(c, "physics.alpha", value); break;
    case SweepAxis::Mode: apply_mode(c, value); break;
  }
  c.validate();
  return c;
}

std::vector<SweepRow> sweep(const SimConfig& base, SweepAxis axis, const std::vector<std::string>& values) {
  std::vector<SimConfig> configs;
  for (const auto& v : values) configs.push_back(apply_axis(base, axis, v));
  const Network net = generate_waxman(base.topology);
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) rows.push_back({values[i], run_experiment(configs[i], net)});
  return rows;
}

std::vector<SweepRow> ablation(const SimConfig& base) { return sweep(base, SweepAxis::Mode, ablation_modes()); }

namespace {

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double parse_number(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ConfigError("values", "not a number: '" + s + "'");
  return v;
}

}  // namespace

std::vector<std::string> parse_values(const std::string& values_text) {
  std::vector<std::string> out;
  if (values_text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(values_text);
    for (std::string tok; std::getline(ss, tok, ':');) parts.push_back(tok);
    if (parts.size() < 2 || parts.size() > 3) throw ConfigError("values", "expected start:stop[:step]");
    const double start = parse_number(parts[0]);
    const double stop = parse_number(parts[1]);
    const double step = parts.size() == 3 ? parse_number(parts[2]) : 1.0;
    if (!(step > 0.0) || stop < start) throw ConfigError("values", "range must be increasing with a positive step");
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < count; ++i) out.push_back(format_number(start + static_cast<double>(i) * step));
  } else {
    std::stringstream ss(values_text);
    for (std::string tok; std::getline(ss, tok, ',');) {
      if (!tok.empty()) out.push_back(tok);
    }
  }
  if (out.empty()) throw ConfigError("values", "no values given");
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << kSweepCsvHeader << '\n';
  char buf[256];
  for (const auto& row : rows) {
    const auto& r = row.report;
    std::snprintf(buf, sizeof buf, ",%s,%.6f,%.6f,%.6f,%lld,%zu,%llu\n", r.mode.c_str(), r.success_ratio,
                  r.success_std, r.link_select_ms_mean, static_cast<long long>(r.slots), r.trials,
                  static_cast<unsigned long long>(r.seed));
    os << row.axis_value << buf;
  }
  return os.str();
}

}  // namespace qroute
