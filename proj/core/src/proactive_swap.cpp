#include "qroute/proactive_swap.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <thread>

namespace qroute {

void ReserveConfig::validate() const {
  if (!(reserve_fraction >= 0.0 && reserve_fraction < 1.0))
    throw ConfigError("reserve.reserve_fraction", "must lie in [0, 1)");
  if (max_chain < 2) throw ConfigError("reserve.max_chain", "must be at least 2");
  if (eval_threads < 1) throw ConfigError("reserve.eval_threads", "must be at least 1");
}

SparseBlock SwapContext::indicator(NodePair pair) const {
  SparseBlock local;
  local.push(static_cast<std::uint32_t>(2 * n * n + pair.first), 1.0);
  local.push(static_cast<std::uint32_t>(2 * n * n + pair.second), 1.0);
  return local;
}

StateVec SwapContext::state_for(NodePair pair) const { return StateVec(swap_state_dim(n), block, indicator(pair)); }

SwapContext encode_swap_context(const ResourcePool& pool, const std::vector<Request>& requests,
                                const FeatureScale& scale) {
  const std::size_t n = pool.network().n_nodes();
  std::vector<int> g(n * n, 0);
  for (const auto& [id, r] : pool.live()) {
    ++g[r.a() * n + r.b()];
    ++g[r.b() * n + r.a()];
  }
  std::vector<int> req(n * n, 0);
  for (const auto& q : requests) {
    if (q.status != RequestStatus::Pending) continue;
    ++req[q.source * n + q.destination];
    ++req[q.destination * n + q.source];
  }
  auto block = std::make_shared<SparseBlock>();
  for (std::size_t k = 0; k < n * n; ++k)
    if (g[k] > 0) block->push(static_cast<std::uint32_t>(k), std::min<double>(g[k], scale.capacity) / scale.capacity);
  for (std::size_t k = 0; k < n * n; ++k)
    if (req[k] > 0)
      block->push(static_cast<std::uint32_t>(n * n + k), std::min<double>(req[k], scale.request_clip) / scale.request_clip);
  return SwapContext{n, std::move(block)};
}

std::set<ResourceId> reserved_resources(const ResourcePool& pool, double fraction) {
  const auto want = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(pool.live_count())));
  std::vector<std::pair<SlotIndex, ResourceId>> order;
  order.reserve(pool.live_count());
  for (const auto& [id, r] : pool.live()) order.emplace_back(r.birth_slot, id);
  std::sort(order.begin(), order.end(), std::greater<>());
  std::set<ResourceId> out;
  for (std::size_t k = 0; k < want && k < order.size(); ++k) out.insert(order[k].second);
  return out;
}

namespace {

// Simple graph view of the unreserved entangled multigraph: one edge per
// node pair labelled with its smallest resource id.
struct ChainGraph {
  std::vector<std::vector<std::pair<NodeId, ResourceId>>> adj;  // sorted by neighbor
};

ChainGraph chain_graph(const ResourcePool& pool, const std::set<ResourceId>& reserved) {
  const std::size_t n = pool.network().n_nodes();
  std::map<NodePair, ResourceId> best;
  for (const auto& [id, r] : pool.live()) {
    if (reserved.contains(id)) continue;
    auto [it, inserted] = best.emplace(r.endpoints(), id);
    if (!inserted) it->second = std::min(it->second, id);
  }
  ChainGraph g;
  g.adj.resize(n);
  for (const auto& [pair, id] : best) {
    g.adj[pair.first].emplace_back(pair.second, id);
    g.adj[pair.second].emplace_back(pair.first, id);
  }
  for (auto& a : g.adj) std::sort(a.begin(), a.end());
  return g;
}

// Layered BFS from `src` keeping, per node, the lexicographically smallest
// resource-id chain among shortest chains. Prefix-minimal chains compose,
// since two equal-length prefixes are ordered before the last element
// matters. `banned` (if set) is a neighbor whose direct edge is skipped.
std::vector<std::vector<ResourceId>> lex_bfs(const ChainGraph& g, NodeId src, std::optional<NodeId> banned,
                                             std::size_t max_depth) {
  const std::size_t n = g.adj.size();
  std::vector<std::vector<ResourceId>> chain(n);
  std::vector<int> depth(n, -1);
  depth[src] = 0;
  std::vector<NodeId> layer{src};
  for (std::size_t d = 1; d <= max_depth && !layer.empty(); ++d) {
    std::map<NodeId, std::vector<ResourceId>> next;
    for (NodeId u : layer) {
      for (const auto& [v, id] : g.adj[u]) {
        if (depth[v] != -1) continue;
        if (u == src && banned && v == *banned) continue;
        std::vector<ResourceId> cand = chain[u];
        cand.push_back(id);
        auto it = next.find(v);
        if (it == next.end()) {
          next.emplace(v, std::move(cand));
        } else if (cand < it->second) {
          it->second = std::move(cand);
        }
      }
    }
    layer.clear();
    for (auto& [v, c] : next) {
      depth[v] = static_cast<int>(d);
      chain[v] = std::move(c);
      layer.push_back(v);
    }
  }
  return chain;
}

}  // namespace

std::vector<SwapCandidate> enumerate_candidates(const ResourcePool& pool, const ReserveConfig& config,
                                                const std::set<ResourceId>& reserved) {
  const ChainGraph g = chain_graph(pool, reserved);
  const std::size_t n = g.adj.size();
  std::vector<SwapCandidate> out;
  for (NodeId s = 0; s < n; ++s) {
    if (g.adj[s].empty()) continue;
    const auto open = lex_bfs(g, s, std::nullopt, config.max_chain);
    std::vector<char> direct(n, 0);
    for (const auto& [v, id] : g.adj[s]) direct[v] = 1;
    for (NodeId t = s + 1; t < n; ++t) {
      std::vector<ResourceId> chain;
      if (direct[t]) {
        // A direct edge exists; the candidate needs a genuine >= 2 chain.
        chain = lex_bfs(g, s, t, config.max_chain)[t];
      } else {
        chain = open[t];
      }
      if (chain.size() < 2) continue;
      SwapCandidate c;
      c.pair = NodePair(s, t);
      c.chain = std::move(chain);
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::vector<SwapCandidate> enumerate_candidates(const ResourcePool& pool, const ReserveConfig& config) {
  return enumerate_candidates(pool, config, reserved_resources(pool, config.reserve_fraction));
}

void evaluate_candidates(std::vector<SwapCandidate>& candidates, const QNetwork& qnet,
                         const std::vector<Request>& requests, const ResourcePool& pool,
                         const FeatureScale& scale, std::size_t threads) {
  if (candidates.empty()) return;
  const SwapContext ctx = encode_swap_context(pool, requests, scale);
  if (qnet.input_dim() != swap_state_dim(ctx.n) || qnet.output_dim() != 2)
    throw std::invalid_argument("evaluate_candidates: Q-network shape does not match the swap state");

  auto score_range = [&](std::size_t lo, std::size_t hi) {
    std::vector<SparseBlock> locals;
    locals.reserve(hi - lo);
    for (std::size_t k = lo; k < hi; ++k) locals.push_back(ctx.indicator(candidates[k].pair));
    const auto q = qnet.forward_shared(WeightSet::Prediction, ctx.block.get(), locals);
    for (std::size_t k = lo; k < hi; ++k) {
      candidates[k].q_value = q[k - lo][1] - q[k - lo][0];
      candidates[k].state = StateVec(swap_state_dim(ctx.n), ctx.block, std::move(locals[k - lo]));
    }
  };

  threads = std::max<std::size_t>(1, std::min(threads, candidates.size() / 16 + 1));
  if (threads == 1) {
    score_range(0, candidates.size());
    return;
  }
  const std::size_t chunk = (candidates.size() + threads - 1) / threads;
  std::vector<std::jthread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(candidates.size(), lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back(score_range, lo, hi);
  }
}

std::vector<SwapEvent> commit_swaps(ResourcePool& pool, const PhysicsConfig& physics,
                                    std::vector<SwapCandidate> candidates, const std::set<ResourceId>& reserved,
                                    double epsilon, Rng& rng) {
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const SwapCandidate& x, const SwapCandidate& y) { return x.q_value > y.q_value; });
  std::vector<SwapEvent> events;
  events.reserve(candidates.size());
  for (auto& c : candidates) {
    SwapEvent ev;
    ev.pair = c.pair;
    ev.state = std::move(c.state);
    bool accept = c.q_value > 0.0;
    if (rng.uniform() < epsilon) accept = !accept;
    if (!accept) {
      events.push_back(std::move(ev));
      continue;
    }
    const bool usable = std::all_of(c.chain.begin(), c.chain.end(), [&](ResourceId id) {
      return pool.is_live(id) && !reserved.contains(id);
    });
    if (!usable || !pool.chain_is_simple(c.chain)) {
      ev.decision = SwapDecision::Conflict;
      events.push_back(std::move(ev));
      continue;
    }
    ResourceId current = c.chain.front();
    bool intact = true;
    for (std::size_t i = 1; i < c.chain.size(); ++i) {
      SwapResult sr = pool.swap(physics, current, c.chain[i], rng);
      for (auto& r : sr.consumed) ev.consumed.push_back(std::move(r));
      if (!sr.created) {
        intact = false;
        break;
      }
      current = *sr.created;
    }
    if (intact) {
      ev.decision = SwapDecision::Committed;
      ev.segment = current;
    } else {
      ev.decision = SwapDecision::Failed;
    }
    events.push_back(std::move(ev));
  }
  return events;
}

ProactiveSwapAgent::ProactiveSwapAgent(const Network& net, TrainConfig train, RewardConfig rewards,
                                       ReserveConfig reserve, std::uint64_t seed)
    : net_(&net),
      train_(std::move(train)),
      rewards_(rewards),
      reserve_(reserve),
      scale_(FeatureScale::for_network(net)),
      qnet_(
          [&] {
            std::vector<std::size_t> sizes{swap_state_dim(net.n_nodes())};
            sizes.insert(sizes.end(), train_.hidden.begin(), train_.hidden.end());
            sizes.push_back(2);
            return sizes;
          }(),
          seed),
      buffer_(train_.buffer_capacity) {}

ProactiveSwapAgent::StepReport ProactiveSwapAgent::step(ResourcePool& pool, const PhysicsConfig& physics,
                                                        const std::vector<Request>& requests, double epsilon,
                                                        Rng& rng) {
  StepReport report;
  const auto reserved = reserved_resources(pool, reserve_.reserve_fraction);
  auto candidates = enumerate_candidates(pool, reserve_, reserved);
  report.candidates = candidates.size();
  evaluate_candidates(candidates, qnet_, requests, pool, scale_, reserve_.eval_threads);
  auto events = commit_swaps(pool, physics, std::move(candidates), reserved, epsilon, rng);

  std::optional<SwapContext> after;
  for (auto& ev : events) {
    switch (ev.decision) {
      case SwapDecision::Rejected:
      case SwapDecision::Conflict:
        buffer_.push(Transition{ev.state, 0, 0.0, ev.state, true});
        break;
      case SwapDecision::Committed:
        ++report.committed;
        ledger_.record(*ev.segment, {std::move(ev.state), 1, ev.pair});
        break;
      case SwapDecision::Failed: {
        ++report.failed;
        if (!after) after = encode_swap_context(pool, requests, scale_);
        buffer_.push(Transition{std::move(ev.state), 1, rewards_.lost, after->state_for(ev.pair), false});
        auto ids = lineage_ids(ev.consumed);
        report.lost.insert(report.lost.end(), ids.begin(), ids.end());
        break;
      }
    }
  }
  std::sort(report.lost.begin(), report.lost.end());
  report.lost.erase(std::unique(report.lost.begin(), report.lost.end()), report.lost.end());
  return report;
}

std::size_t ProactiveSwapAgent::settle(const ResourcePool& pool, const std::vector<Request>& requests,
                                       std::span<const ResourceId> used, std::span<const ResourceId> lost) {
  std::optional<SwapContext> ctx;
  auto next = [&](NodePair pair) {
    if (!ctx) ctx = encode_swap_context(pool, requests, scale_);
    return ctx->state_for(pair);
  };
  auto transitions = ledger_.settle(used, lost, rewards_, next);
  for (auto& t : transitions) buffer_.push(std::move(t));
  return transitions.size();
}

std::optional<SgdStepResult> ProactiveSwapAgent::train(Rng& rng) {
  if (buffer_.size() < train_.batch_size) return std::nullopt;
  auto batch = buffer_.sample(train_.batch_size, rng);
  SgdStepResult r = sgd_step(qnet_, batch, train_);
  ++steps_;
  if (steps_ % train_.target_sync_period == 0) qnet_.sync_target();
  return r;
}

}  // namespace qroute
