#pragma once

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "qroute/dqn.hpp"
#include "qroute/quantum.hpp"
#include "qroute/routing.hpp"
#include "qroute/topology.hpp"

namespace qroute {

/// Per-pair input of the link-selection agent: residual (not yet
/// entangled) channel counts A, link distances D, pending requests R, and
/// the candidate pair indicator P_m.
struct LinkState {
  std::size_t n = 0;
  std::vector<int> available;      // A, n*n
  std::vector<double> distance_km; // D, n*n, physical links only
  std::vector<int> requests;       // R, n*n
  std::vector<int> pair_indicator; // P_m, n

  int a(NodeId i, NodeId j) const { return available[i * n + j]; }
  double d(NodeId i, NodeId j) const { return distance_km[i * n + j]; }
  int r(NodeId i, NodeId j) const { return requests[i * n + j]; }
};

/// Input normalisation shared by both agents' encoders.
struct FeatureScale {
  double capacity = 1.0;       // counts are clipped to [0, capacity] and divided by it
  double distance_km = 1.0;    // distances are divided by this (network diameter)
  double request_clip = 10.0;  // request counts clipped then divided by this

  static FeatureScale for_network(const Network& net);
};

/// Dimension of the flattened link state: 3N^2 + N.
inline std::size_t link_state_dim(std::size_t n) { return 3 * n * n + n; }

/// Raw (unnormalised) state for one physical link. Throws
/// std::invalid_argument when `pair` is not a physical link.
LinkState encode_link_state(const Network& net, const ResourcePool& pool, const std::vector<Request>& requests,
                            NodePair pair);

/// Normalised flat feature vector of a LinkState.
StateVec to_features(const LinkState& state, const FeatureScale& scale);

/// Slot snapshot of the A/D/R block, shared by every per-link state.
struct LinkContext {
  std::size_t n = 0;
  std::shared_ptr<const SparseBlock> block;

  StateVec state_for(NodePair pair) const;
  SparseBlock indicator(NodePair pair) const;
};

LinkContext encode_link_context(const Network& net, const ResourcePool& pool, const std::vector<Request>& requests,
                                const FeatureScale& scale);

struct LinkAction {
  LinkId link = 0;
  NodePair pair;
  int n_channels = 0;
  StateVec state;  // empty for baselines
};

/// Epsilon-greedy choice of how many channels to entangle on every physical
/// link. Greedy ties resolve to the smaller channel count.
std::vector<LinkAction> select_link_actions(const Network& net, const ResourcePool& pool,
                                            const std::vector<Request>& requests, const QNetwork& qnet,
                                            double epsilon, Rng& rng);

/// Clamps a requested channel count to the link's remaining per-slot budget.
/// Memory truncation happens inside ResourcePool::attempt_entanglement.
int clamp_to_channels(const ResourcePool& pool, LinkId link, int n_channels);

struct RewardConfig {
  double used = 1.0;
  double lost = -1.0;
};

/// Delayed-reward bookkeeping: resource id -> the (state, action) decisions
/// that produced it. Entries are settled exactly once, when a resource
/// (or any segment built from it) is used by a request or is lost.
class RewardLedger {
 public:
  struct Provenance {
    StateVec state;
    int action = 0;
    NodePair pair;
  };
  using NextStateFn = std::function<StateVec(NodePair)>;

  void record(ResourceId id, Provenance p);
  bool contains(ResourceId id) const { return entries_.contains(id); }
  std::size_t pending() const;

  /// Settles every entry keyed by an id in `used` (+reward) or `lost`
  /// (-reward). Ids without provenance are counted in unknown_ids().
  std::vector<Transition> settle(std::span<const ResourceId> used, std::span<const ResourceId> lost,
                                 const RewardConfig& rewards, const NextStateFn& next_state);

  std::size_t unknown_ids() const { return unknown_; }

 private:
  std::map<ResourceId, std::vector<Provenance>> entries_;
  std::size_t unknown_ = 0;
};

/// Expands resources into the set of ids in their lineages (sorted, unique).
std::vector<ResourceId> lineage_ids(std::span<const EntangledResource> resources);

/// DQN-driven link selection with online training.
class LinkSelectAgent {
 public:
  LinkSelectAgent(const Network& net, TrainConfig train, RewardConfig rewards, std::uint64_t seed);

  const QNetwork& qnet() const { return qnet_; }
  QNetwork& qnet() { return qnet_; }
  const TrainConfig& train_config() const { return train_; }
  const FeatureScale& scale() const { return scale_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  RewardLedger& ledger() { return ledger_; }

  std::vector<LinkAction> select(const ResourcePool& pool, const std::vector<Request>& requests, double epsilon,
                                 Rng& rng) const;

  /// Associates freshly created resources with the action that made them.
  /// A decision that created nothing is queued as an idle decision.
  void record(const LinkAction& action, std::span<const ResourceId> created);

  /// Settles rewards and pushes the transitions to the replay buffer:
  /// one per used or lost resource with provenance, plus one zero-reward
  /// transition per queued idle decision. Returns the number emitted.
  std::size_t settle(const ResourcePool& pool, const std::vector<Request>& requests,
                     std::span<const ResourceId> used, std::span<const ResourceId> lost);

  /// One SGD step once the buffer holds a full batch; syncs the target net
  /// every target_sync_period steps. Returns nullopt when no step ran.
  std::optional<SgdStepResult> train(Rng& rng);
  std::int64_t train_steps() const { return steps_; }

 private:
  const Network* net_;
  TrainConfig train_;
  RewardConfig rewards_;
  FeatureScale scale_;
  QNetwork qnet_;
  ReplayBuffer buffer_;
  RewardLedger ledger_;
  std::vector<RewardLedger::Provenance> idle_;
  std::int64_t steps_ = 0;
};

/// Hop-count shortest physical path per pending request, one channel per
/// link per covering path, minus Live link-level pairs already cached on
/// the link, clamped to the channel budget.
std::vector<LinkAction> baseline_greedy_select(const Network& net, const ResourcePool& pool,
                                               const std::vector<Request>& requests);

/// Hop-shortest physical path with smallest-node-id tie-break.
std::vector<LinkId> shortest_hop_path(const Network& net, NodeId src, NodeId dst);

struct ExactSelectConfig {
  std::size_t max_nodes = 12;
  std::size_t max_requests = 8;
  std::size_t paths_per_request = 5;  // candidate physical paths per request
  std::size_t extra_hops = 1;         // candidates up to shortest + extra_hops
  int redundancy = 2;                 // max disjoint paths allocated per request
};

class InstanceTooLarge : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// One allocation choice for a request: zero, one or several link-disjoint
/// physical paths.
struct ExactOption {
  std::vector<std::size_t> paths;  // indices into ExactProblem::paths[request]
  double value = 0.0;              // probability the request is served
};

/// The finite decision problem solved by baseline_exact_select.
struct ExactProblem {
  std::vector<std::vector<std::vector<LinkId>>> paths;  // per request candidate paths
  std::vector<std::vector<ExactOption>> options;        // per request, best value first
  std::vector<int> remaining_channels;                   // per link, this slot
  std::vector<int> cached_pairs;                        // per link Live link-level pairs
  std::vector<int> free_memory;                         // per node
};

ExactProblem build_exact_problem(const Network& net, const PhysicsConfig& physics, const ResourcePool& pool,
                                 const std::vector<Request>& requests, const ExactSelectConfig& config);

/// Whether choosing option `choice[r]` for every request fits the budgets.
bool exact_allocation_feasible(const Network& net, const ExactProblem& problem, std::span<const std::size_t> choice);

struct ExactSolution {
  std::vector<std::size_t> choice;  // option index per request
  double value = 0.0;
  std::size_t nodes_explored = 0;
};

/// Branch-and-bound over per-request options maximising the expected number
/// of served requests.
ExactSolution solve_exact(const Network& net, const ExactProblem& problem);

/// Small-instance exact allocation oracle. Refuses (InstanceTooLarge)
/// networks or request sets above the configured bounds.
std::vector<LinkAction> baseline_exact_select(const Network& net, const PhysicsConfig& physics,
                                              const ResourcePool& pool, const std::vector<Request>& requests,
                                              const ExactSelectConfig& config = {});

}  // namespace qroute
