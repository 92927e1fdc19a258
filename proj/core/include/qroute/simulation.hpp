#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qroute/dqn.hpp"
#include "qroute/link_select.hpp"
#include "qroute/proactive_swap.hpp"
#include "qroute/quantum.hpp"
#include "qroute/routing.hpp"
#include "qroute/topology.hpp"

namespace qroute {

enum class LinkSelector { Rl, Greedy, Exact };
enum class ArrivalModel { Fixed, Poisson };

struct RequestModel {
  ArrivalModel model = ArrivalModel::Fixed;
  double per_slot = 5.0;           // count (fixed) or mean (poisson)
  std::int64_t ttl = 10;           // kNoExpiry for never
};

struct SimConfig {
  TopologyConfig topology;
  PhysicsConfig physics;
  TrainConfig link_agent;
  TrainConfig swap_agent;
  RewardConfig rewards;
  ReserveConfig reserve;
  PathSelectConfig routing;
  ExactSelectConfig exact;
  RequestModel requests;

  std::int64_t slots = 5000;
  std::size_t trials = 5;
  LinkSelector link_selector = LinkSelector::Rl;
  bool caching = true;
  bool proactive = false;
  std::uint64_t seed = 1;
  double warmup_fraction = 0.1;
  double epsilon_decay_fraction = 0.1;  // of total slots
  bool check_invariants = false;        // full pool recount every slot
  std::size_t jobs = 1;                 // parallel trials

  void validate() const;
  /// Lifetime actually simulated: 1 when caching is off.
  int effective_lifetime() const { return caching ? physics.lifetime : 1; }
  /// Mode label such as "greedy", "rl+cache" or "rl+cache+proactive".
  std::string mode_name() const;
};

/// Parses a mode label into selector/caching/proactive flags of `config`.
/// Throws ConfigError("mode", ...) for unknown labels.
void apply_mode(SimConfig& config, const std::string& mode);

std::string to_string(LinkSelector s);
LinkSelector link_selector_from_string(const std::string& s);

struct SlotReport {
  SlotIndex slot = 0;
  std::size_t new_requests = 0;
  std::size_t served = 0;
  std::size_t dropped = 0;
  std::size_t pending_start = 0;
  std::size_t pending_end = 0;
  std::size_t attempts = 0;
  std::size_t truncated = 0;
  std::size_t created = 0;     // link-level pairs
  std::size_t consumed = 0;    // pre-existing resources removed by swaps or use
  std::size_t expired = 0;
  std::size_t segments_created = 0;
  std::size_t proactive_failed = 0;
  std::size_t paths_skipped = 0;
  std::size_t live_end = 0;
  std::vector<std::size_t> live_by_age;  // index = age in slots at slot end
  std::vector<int> memory_used;          // per node at slot end
  double epsilon = 0.0;
  std::optional<double> link_loss;
  std::optional<double> swap_loss;
  // wall clock, milliseconds
  double link_select_ms = 0.0;
  double proactive_ms = 0.0;
  double routing_ms = 0.0;
  double train_ms = 0.0;
};

/// The deterministic fields of a SlotReport (no wall-clock timings).
nlohmann::json slot_report_to_json(const SlotReport& r);

/// One trial: owns all mutable simulation state.
class Simulator {
 public:
  Simulator(const SimConfig& config, const Network& net, std::uint64_t trial_seed);
  ~Simulator();
  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  SlotReport run_slot();

  const ResourcePool& pool() const { return pool_; }
  const std::vector<Request>& requests() const { return requests_; }
  const PhysicsConfig& physics() const { return physics_; }
  SlotIndex next_slot() const { return next_slot_; }
  const LinkSelectAgent* link_agent() const { return link_agent_.get(); }
  const ProactiveSwapAgent* swap_agent() const { return swap_agent_.get(); }
  /// Rewards settled so far, per agent.
  std::size_t link_transitions() const { return link_transitions_; }
  std::size_t swap_transitions() const { return swap_transitions_; }

 private:
  void inject_requests(SlotReport& report);
  std::vector<LinkAction> select_links();

  const SimConfig& config_;
  const Network& net_;
  PhysicsConfig physics_;
  ResourcePool pool_;
  std::vector<Request> requests_;  // Pending only, FIFO
  Rng request_rng_;
  Rng physics_rng_;
  Rng link_rng_;
  Rng swap_rng_;
  std::unique_ptr<LinkSelectAgent> link_agent_;
  std::unique_ptr<ProactiveSwapAgent> swap_agent_;
  SlotIndex next_slot_ = 0;
  RequestId next_request_ = 0;
  std::size_t link_transitions_ = 0;
  std::size_t swap_transitions_ = 0;
};

struct TrialReport {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::size_t served = 0;    // measurement window
  std::size_t dropped = 0;   // measurement window
  std::size_t served_all = 0;
  std::size_t dropped_all = 0;
  double success_ratio = 1.0;      // measurement window
  double success_ratio_all = 1.0;  // whole horizon
  bool vacuous = false;            // zero denominator in the window
  std::size_t segments_created = 0;
  std::size_t expired = 0;
  double link_select_ms_mean = 0.0;
  double proactive_ms_mean = 0.0;
  double slot_ms_mean = 0.0;
};

struct RunReport {
  std::string mode;
  std::int64_t slots = 0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  double success_ratio = 0.0;  // mean over trials
  double success_std = 0.0;    // sample std over trials
  double success_ratio_all = 0.0;
  double link_select_ms_mean = 0.0;
  std::vector<TrialReport> per_trial;
};

/// Callback receiving every slot report of a trial, in order.
using SlotSink = std::function<void(std::size_t trial, const SlotReport&)>;

std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t trial);

TrialReport run_trial(const SimConfig& config, const Network& net, std::size_t trial,
                      const SlotSink& sink = {});

/// All trials of `config` (in parallel up to config.jobs), aggregated.
RunReport run_experiment(const SimConfig& config, const Network& net, const SlotSink& sink = {});
RunReport run_experiment(const SimConfig& config);

/// Deterministic fields only, plus the config echo.
nlohmann::json run_report_to_json(const RunReport& report, const SimConfig& config);
/// Wall-clock fields.
nlohmann::json run_timing_to_json(const RunReport& report);

enum class SweepAxis { Lifetime, Requests, SwapProb, Alpha, Mode };
SweepAxis sweep_axis_from_string(const std::string& s);
std::string to_string(SweepAxis axis);

/// Applies one axis value to a copy of `base`.
SimConfig apply_axis(const SimConfig& base, SweepAxis axis, const std::string& value);

struct SweepRow {
  std::string axis_value;
  RunReport report;
};

/// run_experiment per value, all other settings fixed. The topology is
/// generated once from base.topology.
std::vector<SweepRow> sweep(const SimConfig& base, SweepAxis axis, const std::vector<std::string>& values);

/// The four canonical modes on identical seeds.
std::vector<SweepRow> ablation(const SimConfig& base);
inline const std::vector<std::string>& ablation_modes() {
  static const std::vector<std::string> modes{"greedy", "rl", "rl+cache", "rl+cache+proactive"};
  return modes;
}

/// "1:10" (step 1), "0.5:1.0:0.1", or a comma-separated list.
std::vector<std::string> parse_values(const std::string& values_text);

inline constexpr const char* kSweepCsvHeader =
    "axis_value,mode,success_ratio,success_std,link_select_ms_mean,slots,trials,seed";
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace qroute
