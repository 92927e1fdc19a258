#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "qroute/quantum.hpp"
#include "qroute/topology.hpp"

namespace qroute::testing {

// Nodes on the x axis, `spacing_km` apart, linked in a chain.
inline Network line_network(std::size_t n, double spacing_km = 100.0, int capacity = 5, int memory = 12) {
  std::vector<Position> pos;
  for (std::size_t i = 0; i < n; ++i) pos.push_back({static_cast<double>(i) * spacing_km, 0.0});
  std::vector<Link> links;
  for (std::size_t i = 0; i + 1 < n; ++i) links.push_back({i, i + 1, spacing_km, capacity});
  return Network(std::move(pos), std::move(links), std::vector<int>(n, memory));
}

struct EdgeSpec {
  NodeId u;
  NodeId v;
  int capacity;
};

// Arbitrary placement; link lengths are derived from the positions.
inline Network make_network(std::vector<Position> pos, const std::vector<EdgeSpec>& edges, int memory = 12) {
  std::vector<Link> links;
  for (const auto& e : edges) {
    const double d = std::hypot(pos[e.u].x_km - pos[e.v].x_km, pos[e.u].y_km - pos[e.v].y_km);
    links.push_back({e.u, e.v, d, e.capacity});
  }
  const std::size_t n = pos.size();
  return Network(std::move(pos), std::move(links), std::vector<int>(n, memory));
}

// Physics with certain link generation and the given BSM probability.
inline PhysicsConfig certain_physics(double swap_prob = 1.0, int lifetime = 10) {
  PhysicsConfig p;
  p.alpha = 0.0;
  p.swap_prob = swap_prob;
  p.lifetime = lifetime;
  return p;
}

// Creates exactly one Live link-level pair on `link` (alpha must be 0).
inline ResourceId make_pair(ResourcePool& pool, const PhysicsConfig& physics, LinkId link, Rng& rng) {
  auto r = pool.attempt_entanglement(physics, link, 1, rng);
  return r.created.at(0);
}

}  // namespace qroute::testing
