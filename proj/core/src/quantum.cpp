#include "qroute/quantum.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace qroute {

void PhysicsConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("physics.alpha", "must be a finite value >= 0");
  if (!(swap_prob >= 0.0 && swap_prob <= 1.0)) throw ConfigError("physics.swap_prob", "must lie in [0, 1]");
  if (lifetime < 1) throw ConfigError("physics.lifetime", "must be at least 1 slot");
}

double link_success_prob(const Network& net, const PhysicsConfig& physics, LinkId link) {
  return std::exp(-physics.alpha * net.link(link).length_km);
}

ResourcePool::ResourcePool(const Network& net)
    : net_(&net),
      link_pairs_(net.n_links(), 0),
      memory_used_(net.n_nodes(), 0),
      channels_used_(net.n_links(), 0) {}

void ResourcePool::reset_slot_channels() { std::fill(channels_used_.begin(), channels_used_.end(), 0); }

const EntangledResource& ResourcePool::resource(ResourceId id) const {
  auto it = live_.find(id);
  if (it == live_.end()) throw std::out_of_range("resource " + std::to_string(id) + " is not live");
  return it->second;
}

std::vector<ResourceId> ResourcePool::live_between(NodeId a, NodeId b) const {
  auto it = by_pair_.find(NodePair(a, b));
  if (it == by_pair_.end()) return {};
  return it->second;
}

int ResourcePool::live_link_pairs(LinkId link) const { return link_pairs_.at(link); }

ResourceId ResourcePool::insert(EntangledResource r) {
  r.id = next_id_++;
  r.state = ResourceState::Live;
  r.lineage.push_back(r.id);
  std::sort(r.lineage.begin(), r.lineage.end());
  ++memory_used_[r.a()];
  ++memory_used_[r.b()];
  if (r.hop_count() == 1) ++link_pairs_[r.hops.front()];
  // ids are increasing, so per-pair lists stay sorted by appending
  by_pair_[r.endpoints()].push_back(r.id);
  const ResourceId id = r.id;
  live_.emplace(id, std::move(r));
  return id;
}

EntangledResource ResourcePool::remove(ResourceId id, ResourceState final_state) {
  auto it = live_.find(id);
  if (it == live_.end()) throw std::out_of_range("resource " + std::to_string(id) + " is not live");
  EntangledResource r = std::move(it->second);
  live_.erase(it);
  --memory_used_[r.a()];
  --memory_used_[r.b()];
  if (r.hop_count() == 1) --link_pairs_[r.hops.front()];
  auto pit = by_pair_.find(r.endpoints());
  auto& ids = pit->second;
  ids.erase(std::find(ids.begin(), ids.end(), id));
  if (ids.empty()) by_pair_.erase(pit);
  r.state = final_state;
  return r;
}

AttemptResult ResourcePool::attempt_entanglement(const PhysicsConfig& physics, LinkId link, int n_attempts,
                                                 Rng& rng) {
  AttemptResult result;
  if (n_attempts <= 0) return result;
  const Link& l = net_->link(link);
  if (n_attempts > remaining_channels(link)) {
    throw InvariantViolation("attempt_entanglement: " + std::to_string(n_attempts) +
                             " attempts exceed remaining channel budget " +
                             std::to_string(remaining_channels(link)) + " on link " + std::to_string(link));
  }
  const int feasible = std::max(0, std::min({n_attempts, free_memory(l.u), free_memory(l.v)}));
  result.attempted = feasible;
  result.truncated = n_attempts - feasible;
  channels_used_[link] += feasible;

  const double p = link_success_prob(*net_, physics, link);
  for (int i = 0; i < feasible; ++i) {
    if (rng.uniform() < p) {
      EntangledResource r;
      r.nodes = {l.u, l.v};
      r.hops = {link};
      r.birth_slot = current_slot_;
      result.created.push_back(insert(std::move(r)));
    }
  }
  return result;
}

SwapResult ResourcePool::swap(const PhysicsConfig& physics, ResourceId r1, ResourceId r2, Rng& rng) {
  if (r1 == r2) throw std::invalid_argument("swap: a resource cannot be swapped with itself");
  const EntangledResource& x = resource(r1);
  const EntangledResource& y = resource(r2);

  std::optional<NodeId> shared;
  int shared_count = 0;
  for (NodeId ex : {x.a(), x.b()}) {
    if (ex == y.a() || ex == y.b()) {
      shared = ex;
      ++shared_count;
    }
  }
  if (shared_count != 1) {
    throw std::invalid_argument("swap: resources " + std::to_string(r1) + " and " + std::to_string(r2) +
                                " do not share exactly one endpoint");
  }
  const NodeId mid = *shared;
  const std::set<NodeId> x_nodes(x.nodes.begin(), x.nodes.end());
  for (NodeId n : y.nodes) {
    if (n != mid && x_nodes.contains(n)) {
      throw std::invalid_argument("swap: paths of resources " + std::to_string(r1) + " and " +
                                  std::to_string(r2) + " intersect at node " + std::to_string(n));
    }
  }

  EntangledResource joined;
  joined.nodes = x.nodes;
  joined.hops = x.hops;
  if (joined.nodes.front() == mid) {
    std::reverse(joined.nodes.begin(), joined.nodes.end());
    std::reverse(joined.hops.begin(), joined.hops.end());
  }
  std::vector<NodeId> tail_nodes = y.nodes;
  std::vector<LinkId> tail_hops = y.hops;
  if (tail_nodes.front() != mid) {
    std::reverse(tail_nodes.begin(), tail_nodes.end());
    std::reverse(tail_hops.begin(), tail_hops.end());
  }
  joined.nodes.insert(joined.nodes.end(), tail_nodes.begin() + 1, tail_nodes.end());
  joined.hops.insert(joined.hops.end(), tail_hops.begin(), tail_hops.end());
  joined.birth_slot = std::min(x.birth_slot, y.birth_slot);
  joined.lineage = x.lineage;
  joined.lineage.insert(joined.lineage.end(), y.lineage.begin(), y.lineage.end());

  SwapResult result;
  result.consumed.push_back(remove(r1, ResourceState::Consumed));
  result.consumed.push_back(remove(r2, ResourceState::Consumed));
  if (rng.uniform() < physics.swap_prob) result.created = insert(std::move(joined));
  return result;
}

EntangledResource ResourcePool::consume(ResourceId id) { return remove(id, ResourceState::Consumed); }

std::vector<EntangledResource> ResourcePool::expire_cache(const PhysicsConfig& physics) {
  std::vector<ResourceId> doomed;
  for (const auto& [id, r] : live_) {
    if (current_slot_ - r.birth_slot >= physics.lifetime) doomed.push_back(id);
  }
  std::vector<EntangledResource> expired;
  expired.reserve(doomed.size());
  for (ResourceId id : doomed) expired.push_back(remove(id, ResourceState::Expired));
  return expired;
}

bool ResourcePool::chain_is_simple(std::span<const ResourceId> chain) const {
  std::set<NodeId> seen;
  std::size_t expected = 1;
  for (ResourceId id : chain) {
    const auto& r = resource(id);
    seen.insert(r.nodes.begin(), r.nodes.end());
    expected += r.hop_count();
  }
  return seen.size() == expected;
}

void ResourcePool::check_invariants(const PhysicsConfig& physics) const {
  std::vector<int> mem(net_->n_nodes(), 0);
  std::vector<int> pairs(net_->n_links(), 0);
  std::size_t indexed = 0;
  for (const auto& [id, r] : live_) {
    const std::string who = "resource " + std::to_string(id);
    if (r.nodes.size() != r.hops.size() + 1 || r.hops.empty())
      throw InvariantViolation(who + ": malformed path");
    std::set<NodeId> visited;
    for (std::size_t i = 0; i < r.hops.size(); ++i) {
      const Link& l = net_->link(r.hops[i]);
      const bool fwd = l.u == r.nodes[i] && l.v == r.nodes[i + 1];
      const bool rev = l.v == r.nodes[i] && l.u == r.nodes[i + 1];
      if (!fwd && !rev) throw InvariantViolation(who + ": hop does not match path nodes");
    }
    for (NodeId n : r.nodes) {
      if (!visited.insert(n).second) throw InvariantViolation(who + ": path is not simple");
    }
    if (current_slot_ - r.birth_slot >= physics.lifetime)
      throw InvariantViolation(who + ": live past its lifetime");
    ++mem[r.a()];
    ++mem[r.b()];
    if (r.hop_count() == 1) ++pairs[r.hops.front()];
  }
  for (const auto& [pair, ids] : by_pair_) {
    for (ResourceId id : ids) {
      auto it = live_.find(id);
      if (it == live_.end() || it->second.endpoints() != pair)
        throw InvariantViolation("pair index out of sync for resource " + std::to_string(id));
      ++indexed;
    }
  }
  if (indexed != live_.size()) throw InvariantViolation("pair index size mismatch");
  for (NodeId n = 0; n < net_->n_nodes(); ++n) {
    if (mem[n] != memory_used_[n])
      throw InvariantViolation("memory counter drift at node " + std::to_string(n));
    if (mem[n] > net_->memory(n))
      throw InvariantViolation("memory capacity exceeded at node " + std::to_string(n));
  }
  for (LinkId e = 0; e < net_->n_links(); ++e) {
    if (pairs[e] != link_pairs_[e]) throw InvariantViolation("link pair counter drift on link " + std::to_string(e));
    if (channels_used_[e] > net_->link(e).capacity || channels_used_[e] < 0)
      throw InvariantViolation("channel capacity exceeded on link " + std::to_string(e));
  }
}

}  // namespace qroute
