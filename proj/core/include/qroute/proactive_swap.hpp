#pragma once

#include <set>
#include <vector>

#include "qroute/dqn.hpp"
#include "qroute/link_select.hpp"
#include "qroute/quantum.hpp"
#include "qroute/routing.hpp"

namespace qroute {

struct ReserveConfig {
  double reserve_fraction = 0.25;
  std::size_t max_chain = 4;
  std::size_t eval_threads = 1;  // worker threads for candidate scoring

  void validate() const;
};

/// A pair that can be joined by composing a chain of Live resources.
struct SwapCandidate {
  NodePair pair;
  std::vector<ResourceId> chain;  // from pair.first to pair.second
  double q_value = 0.0;
  StateVec state;
};

/// Dimension of the flattened swap state [G; R; P_m]: 2N^2 + N.
inline std::size_t swap_state_dim(std::size_t n) { return 2 * n * n + n; }

/// Slot snapshot of the G/R block shared by every candidate's state.
struct SwapContext {
  std::size_t n = 0;
  std::shared_ptr<const SparseBlock> block;

  StateVec state_for(NodePair pair) const;
  SparseBlock indicator(NodePair pair) const;
};

SwapContext encode_swap_context(const ResourcePool& pool, const std::vector<Request>& requests,
                                const FeatureScale& scale);

/// The youngest ceil(fraction * live) resources (latest birth slot, then
/// highest id). They are exempt from proactive consumption.
std::set<ResourceId> reserved_resources(const ResourcePool& pool, double fraction);

/// For every unordered pair joinable by 2..max_chain unreserved Live
/// resources along a simple path, the shortest such chain with the
/// lexicographically smallest resource-id sequence.
std::vector<SwapCandidate> enumerate_candidates(const ResourcePool& pool, const ReserveConfig& config,
                                                const std::set<ResourceId>& reserved);
std::vector<SwapCandidate> enumerate_candidates(const ResourcePool& pool, const ReserveConfig& config);

/// Fills q_value = Q[1] - Q[0] and the state of every candidate, all scored
/// against one snapshot. Safe to split across threads.
void evaluate_candidates(std::vector<SwapCandidate>& candidates, const QNetwork& qnet,
                         const std::vector<Request>& requests, const ResourcePool& pool,
                         const FeatureScale& scale, std::size_t threads = 1);

enum class SwapDecision { Rejected, Conflict, Committed, Failed };

struct SwapEvent {
  NodePair pair;
  StateVec state;
  SwapDecision decision = SwapDecision::Rejected;
  std::optional<ResourceId> segment;       // Committed
  std::vector<EntangledResource> consumed; // resources fed to BSMs
};

/// Greedy commit in descending q order. With probability epsilon a
/// candidate's accept decision is flipped (exploration). A candidate runs
/// only if every chain resource is still Live and unreserved; its BSMs run
/// left to right and stop at the first failure.
std::vector<SwapEvent> commit_swaps(ResourcePool& pool, const PhysicsConfig& physics,
                                    std::vector<SwapCandidate> candidates, const std::set<ResourceId>& reserved,
                                    double epsilon, Rng& rng);

/// The proactive swapping agent: binary-action DQN with delayed rewards.
class ProactiveSwapAgent {
 public:
  ProactiveSwapAgent(const Network& net, TrainConfig train, RewardConfig rewards, ReserveConfig reserve,
                     std::uint64_t seed);

  const QNetwork& qnet() const { return qnet_; }
  QNetwork& qnet() { return qnet_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  RewardLedger& ledger() { return ledger_; }
  const ReserveConfig& reserve() const { return reserve_; }

  struct StepReport {
    std::size_t candidates = 0;
    std::size_t committed = 0;
    std::size_t failed = 0;
    std::vector<ResourceId> lost;  // lineage ids destroyed by BSM failures
  };

  /// enumerate -> evaluate -> commit, recording provenance for new segments
  /// and pushing immediate transitions (rejections, BSM failures).
  StepReport step(ResourcePool& pool, const PhysicsConfig& physics, const std::vector<Request>& requests,
                  double epsilon, Rng& rng);

  /// Delayed rewards for segments used by requests or lost.
  std::size_t settle(const ResourcePool& pool, const std::vector<Request>& requests,
                     std::span<const ResourceId> used, std::span<const ResourceId> lost);

  std::optional<SgdStepResult> train(Rng& rng);
  std::int64_t train_steps() const { return steps_; }

 private:
  const Network* net_;
  TrainConfig train_;
  RewardConfig rewards_;
  ReserveConfig reserve_;
  FeatureScale scale_;
  QNetwork qnet_;
  ReplayBuffer buffer_;
  RewardLedger ledger_;
  std::int64_t steps_ = 0;
};

}  // namespace qroute
