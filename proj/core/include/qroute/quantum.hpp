#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "qroute/rng.hpp"
#include "qroute/topology.hpp"
#include "qroute/types.hpp"

namespace qroute {

struct PhysicsConfig {
  double alpha = 0.002;    // per-km attenuation
  double swap_prob = 0.9;  // BSM success probability q
  int lifetime = 10;       // L_max, in slots

  void validate() const;
};

/// P(u,v) = exp(-alpha * l(u,v)).
double link_success_prob(const Network& net, const PhysicsConfig& physics, LinkId link);

enum class ResourceState { Live, Consumed, Expired };

/// A link-level entangled pair (one hop) or a swapped segment (several hops).
struct EntangledResource {
  ResourceId id = 0;
  std::vector<NodeId> nodes;   // path from nodes.front() to nodes.back()
  std::vector<LinkId> hops;    // physical links, aligned with `nodes`
  SlotIndex birth_slot = 0;    // birth of the oldest constituent pair
  ResourceState state = ResourceState::Live;
  /// Sorted ids of this resource and every resource consumed to build it.
  std::vector<ResourceId> lineage;

  NodeId a() const { return nodes.front(); }
  NodeId b() const { return nodes.back(); }
  NodePair endpoints() const { return {nodes.front(), nodes.back()}; }
  std::size_t hop_count() const { return hops.size(); }
};

struct AttemptResult {
  int attempted = 0;   // attempts fired (charged against the channel budget)
  int truncated = 0;   // requested attempts dropped for lack of endpoint memory
  std::vector<ResourceId> created;
};

struct SwapResult {
  std::optional<ResourceId> created;       // set on BSM success
  std::vector<EntangledResource> consumed; // the two inputs, now Consumed
};

/// Per-slot mutable entanglement state: the cache of live pairs/segments,
/// node memory occupancy and per-link channel usage.
///
/// Memory accounting: every Live resource holds one qubit slot at each of its
/// two endpoints; interior nodes of a segment hold nothing.
class ResourcePool {
 public:
  explicit ResourcePool(const Network& net);

  const Network& network() const { return *net_; }
  SlotIndex current_slot() const { return current_slot_; }

  /// Moves to the next slot. Call expire_cache() afterwards.
  void advance_slot() { ++current_slot_; }

  void reset_slot_channels();

  /// Fires up to `n_attempts` EPS shots on `link`. Attempts beyond the free
  /// memory of either endpoint are truncated (reported, not an error).
  /// Asking for more than the remaining channel budget is a contract failure.
  AttemptResult attempt_entanglement(const PhysicsConfig& physics, LinkId link, int n_attempts, Rng& rng);

  /// Bell-state measurement joining two Live resources at their shared
  /// endpoint. Both inputs are consumed whatever the outcome.
  SwapResult swap(const PhysicsConfig& physics, ResourceId r1, ResourceId r2, Rng& rng);

  /// Consumes a resource directly (it served as an end-to-end pair).
  EntangledResource consume(ResourceId id);

  /// Expires every Live resource aged >= lifetime and frees its memory.
  std::vector<EntangledResource> expire_cache(const PhysicsConfig& physics);

  bool is_live(ResourceId id) const { return live_.contains(id); }
  const EntangledResource& resource(ResourceId id) const;
  const std::map<ResourceId, EntangledResource>& live() const { return live_; }
  std::size_t live_count() const { return live_.size(); }

  /// Live resources whose endpoints are exactly {a, b}, in id order.
  std::vector<ResourceId> live_between(NodeId a, NodeId b) const;
  /// Live single-hop pairs on a physical link.
  int live_link_pairs(LinkId link) const;

  int memory_used(NodeId n) const { return memory_used_.at(n); }
  int free_memory(NodeId n) const { return net_->memory(n) - memory_used_.at(n); }
  int channels_in_use(LinkId link) const { return channels_used_.at(link); }
  int remaining_channels(LinkId link) const { return net_->link(link).capacity - channels_used_.at(link); }

  /// Recomputes memory usage from scratch and checks every pool invariant
  /// against the incremental counters. Throws InvariantViolation.
  void check_invariants(const PhysicsConfig& physics) const;

  /// True if swapping the chain left to right would produce a resource whose
  /// physical path is simple (no node visited twice).
  bool chain_is_simple(std::span<const ResourceId> chain) const;

 private:
  ResourceId insert(EntangledResource r);
  EntangledResource remove(ResourceId id, ResourceState final_state);

  const Network* net_;
  SlotIndex current_slot_ = 0;
  ResourceId next_id_ = 0;
  std::map<ResourceId, EntangledResource> live_;
  std::map<NodePair, std::vector<ResourceId>> by_pair_;
  std::vector<int> link_pairs_;
  std::vector<int> memory_used_;
  std::vector<int> channels_used_;
};

}  // namespace qroute
