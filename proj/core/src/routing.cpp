#include "qroute/routing.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <tuple>

namespace qroute {

std::vector<RequestId> age_requests(std::vector<Request>& requests, SlotIndex current_slot) {
  std::vector<RequestId> dropped;
  for (auto& r : requests) {
    if (r.status == RequestStatus::Pending && r.expired_at(current_slot)) {
      r.status = RequestStatus::Dropped;
      dropped.push_back(r.id);
    }
  }
  return dropped;
}

EntangledGraph::EntangledGraph(std::size_t n_nodes, std::vector<Edge> edges)
    : edges_(std::move(edges)), incident_(n_nodes) {
  std::sort(edges_.begin(), edges_.end(), [](const Edge& x, const Edge& y) { return x.resource < y.resource; });
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    const Edge& e = edges_[k];
    if (e.a >= n_nodes || e.b >= n_nodes || e.a == e.b)
      throw std::invalid_argument("EntangledGraph: bad edge for resource " + std::to_string(e.resource));
    incident_[e.a].push_back(k);
    incident_[e.b].push_back(k);
  }
}

EntangledGraph build_entangled_graph(const ResourcePool& pool) {
  std::vector<EntangledGraph::Edge> edges;
  edges.reserve(pool.live_count());
  for (const auto& [id, r] : pool.live()) edges.push_back({id, r.a(), r.b(), r.birth_slot});
  return EntangledGraph(pool.network().n_nodes(), std::move(edges));
}

namespace {

struct Label {
  std::size_t hops = 0;
  std::int64_t birth_sum = 0;
  std::vector<ResourceId> seq;

  bool operator<(const Label& o) const {
    return std::tie(hops, birth_sum, seq) < std::tie(o.hops, o.birth_sum, o.seq);
  }
};

// Lexicographic (hops, birth_sum, resource ids) shortest path from `src` to
// `dst` using only edges not yet taken. Additive positive hop costs make the
// label order prefix-consistent, so plain Dijkstra is exact.
std::optional<ResourcePath> shortest_path(const EntangledGraph& g, const std::vector<char>& taken, NodeId src,
                                          NodeId dst) {
  if (src == dst) return std::nullopt;
  const std::size_t n = g.n_nodes();
  std::vector<std::optional<Label>> best(n);
  std::vector<char> done(n, 0);
  using Item = std::pair<Label, NodeId>;
  auto cmp = [](const Item& x, const Item& y) { return y.first < x.first || (!(x.first < y.first) && y.second < x.second); };
  std::priority_queue<Item, std::vector<Item>, decltype(cmp)> frontier(cmp);
  best[src] = Label{};
  frontier.push({Label{}, src});
  while (!frontier.empty()) {
    auto [label, u] = frontier.top();
    frontier.pop();
    if (done[u]) continue;
    done[u] = 1;
    if (u == dst) return label.seq;
    for (std::size_t k : g.incident(u)) {
      if (taken[k]) continue;
      const auto& e = g.edges()[k];
      const NodeId v = e.other(u);
      if (done[v]) continue;
      Label next = label;
      next.hops += 1;
      next.birth_sum += e.birth_slot;
      next.seq.push_back(e.resource);
      if (!best[v] || next < *best[v]) {
        best[v] = next;
        frontier.push({std::move(next), v});
      }
    }
  }
  return std::nullopt;
}

}  // namespace

std::vector<RequestPaths> select_paths(const EntangledGraph& graph, const std::vector<Request>& pending,
                                       const PathSelectConfig& config) {
  std::map<ResourceId, std::size_t> edge_index;
  for (std::size_t k = 0; k < graph.edges().size(); ++k) edge_index[graph.edges()[k].resource] = k;
  std::vector<char> taken(graph.edges().size(), 0);

  std::vector<RequestPaths> out;
  std::vector<const Request*> active;
  for (const auto& r : pending) {
    if (r.status != RequestStatus::Pending) continue;
    active.push_back(&r);
    out.push_back({r.id, {}});
  }
  if (config.redundancy < 1) return out;

  auto extract = [&](std::size_t slot) {
    const Request& r = *active[slot];
    auto path = shortest_path(graph, taken, r.source, r.destination);
    if (!path) return false;
    for (ResourceId id : *path) taken[edge_index.at(id)] = 1;
    out[slot].paths.push_back(std::move(*path));
    return true;
  };

  for (std::size_t i = 0; i < active.size(); ++i) extract(i);
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (out[i].paths.empty()) continue;
    while (static_cast<int>(out[i].paths.size()) < config.redundancy && extract(i)) {
    }
  }
  return out;
}

std::vector<RequestOutcome> execute_paths(ResourcePool& pool, const PhysicsConfig& physics,
                                          std::vector<Request>& requests,
                                          const std::vector<RequestPaths>& assignment, Rng& rng) {
  std::map<RequestId, Request*> by_id;
  for (auto& r : requests) by_id[r.id] = &r;

  std::vector<RequestOutcome> outcomes;
  for (const RequestPaths& rp : assignment) {
    RequestOutcome outcome;
    outcome.request = rp.request;
    auto it = by_id.find(rp.request);
    if (it == by_id.end()) throw std::invalid_argument("execute_paths: unknown request " + std::to_string(rp.request));
    Request& req = *it->second;
    if (req.status != RequestStatus::Pending) {
      outcomes.push_back(std::move(outcome));
      continue;
    }
    for (const ResourcePath& path : rp.paths) {
      if (path.empty()) continue;
      if (!pool.chain_is_simple(path)) {
        ++outcome.paths_skipped;
        continue;
      }
      ++outcome.paths_tried;
      ResourceId current = path.front();
      bool intact = true;
      for (std::size_t i = 1; i < path.size(); ++i) {
        ++outcome.swaps_attempted;
        SwapResult sr = pool.swap(physics, current, path[i], rng);
        for (auto& c : sr.consumed) outcome.consumed.push_back(std::move(c));
        if (!sr.created) {
          intact = false;
          break;
        }
        current = *sr.created;
      }
      if (!intact) continue;
      const auto& fin = pool.resource(current);
      if (fin.endpoints() != NodePair(req.source, req.destination)) {
        throw InvariantViolation("execute_paths: path for request " + std::to_string(req.id) +
                                 " does not join its endpoints");
      }
      outcome.consumed.push_back(pool.consume(current));
      req.status = RequestStatus::Served;
      outcome.served = true;
      break;
    }
    outcomes.push_back(std::move(outcome));
  }
  return outcomes;
}

}  // namespace qroute
