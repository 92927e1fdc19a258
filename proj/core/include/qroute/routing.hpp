#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "qroute/quantum.hpp"
#include "qroute/rng.hpp"
#include "qroute/types.hpp"

namespace qroute {

enum class RequestStatus { Pending, Served, Dropped };

/// Sentinel TTL for requests that never expire.
inline constexpr std::int64_t kNoExpiry = std::numeric_limits<std::int64_t>::max();

struct Request {
  RequestId id = 0;
  NodeId source = 0;
  NodeId destination = 0;
  SlotIndex arrival_slot = 0;
  std::int64_t ttl_slots = 10;
  RequestStatus status = RequestStatus::Pending;

  /// True once the request has waited its full TTL at `slot`.
  bool expired_at(SlotIndex slot) const {
    return ttl_slots != kNoExpiry && slot - arrival_slot >= ttl_slots;
  }
};

/// Marks Pending requests past their TTL as Dropped; returns their ids.
std::vector<RequestId> age_requests(std::vector<Request>& requests, SlotIndex current_slot);

/// Multigraph over nodes whose edges are the Live resources of a pool.
class EntangledGraph {
 public:
  struct Edge {
    ResourceId resource;
    NodeId a;
    NodeId b;
    SlotIndex birth_slot;
    NodeId other(NodeId n) const { return n == a ? b : a; }
  };

  EntangledGraph() = default;
  EntangledGraph(std::size_t n_nodes, std::vector<Edge> edges);

  std::size_t n_nodes() const { return incident_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  /// Edge indices incident to n, in ascending resource-id order.
  const std::vector<std::size_t>& incident(NodeId n) const { return incident_.at(n); }

 private:
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> incident_;
};

EntangledGraph build_entangled_graph(const ResourcePool& pool);

/// A path as an ordered list of resources from source to destination.
using ResourcePath = std::vector<ResourceId>;

struct RequestPaths {
  RequestId request = 0;
  std::vector<ResourcePath> paths;
};

struct PathSelectConfig {
  int redundancy = 2;  // max edge-disjoint paths per request
};

/// Sequential shortest-path extraction over the residual multigraph. Paths
/// are ordered by (edge count, sum of birth slots, resource ids), so older
/// resources are preferred among equally short paths. Every request first
/// gets at most one path in FIFO order; remaining redundancy is then handed
/// out in a second FIFO round. Paths are edge-disjoint across the slot.
/// Only Pending requests are considered; they must be sorted FIFO by caller.
std::vector<RequestPaths> select_paths(const EntangledGraph& graph, const std::vector<Request>& pending,
                                       const PathSelectConfig& config = {});

struct RequestOutcome {
  RequestId request = 0;
  bool served = false;
  int paths_tried = 0;
  int swaps_attempted = 0;
  int paths_skipped = 0;  // chains whose joined physical path would not be simple
  /// Every resource consumed while serving this request (successful or not).
  std::vector<EntangledResource> consumed;
};

/// Tries each request's paths in order, chaining BSMs left to right. The
/// first fully successful path serves the request and its final end-to-end
/// pair is consumed. Paths after the successful one are left untouched.
std::vector<RequestOutcome> execute_paths(ResourcePool& pool, const PhysicsConfig& physics,
                                          std::vector<Request>& requests,
                                          const std::vector<RequestPaths>& assignment, Rng& rng);

}  // namespace qroute
