#include "qroute/link_select.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <set>
#include <string>

namespace qroute {

FeatureScale FeatureScale::for_network(const Network& net) {
  FeatureScale s;
  s.capacity = std::max(1, net.max_capacity());
  s.distance_km = net.diameter_km() > 0.0 ? net.diameter_km() : 1.0;
  return s;
}

namespace {

void require_link(const Network& net, NodePair pair) {
  if (pair.first == pair.second || pair.second >= net.n_nodes() || !net.find_link(pair.first, pair.second)) {
    throw std::invalid_argument("pair (" + std::to_string(pair.first) + ", " + std::to_string(pair.second) +
                                ") is not a physical link");
  }
}

int residual_channels(const Network& net, const ResourcePool& pool, LinkId e) {
  return std::max(0, net.link(e).capacity - pool.live_link_pairs(e));
}

std::vector<int> request_matrix(std::size_t n, const std::vector<Request>& requests) {
  std::vector<int> r(n * n, 0);
  for (const auto& req : requests) {
    if (req.status != RequestStatus::Pending) continue;
    ++r[req.source * n + req.destination];
    ++r[req.destination * n + req.source];
  }
  return r;
}

double clip_scale(double x, double clip) { return std::min(x, clip) / clip; }

}  // namespace

LinkState encode_link_state(const Network& net, const ResourcePool& pool, const std::vector<Request>& requests,
                            NodePair pair) {
  require_link(net, pair);
  const std::size_t n = net.n_nodes();
  LinkState s;
  s.n = n;
  s.available.assign(n * n, 0);
  s.distance_km.assign(n * n, 0.0);
  for (LinkId e = 0; e < net.n_links(); ++e) {
    const Link& l = net.link(e);
    const int avail = residual_channels(net, pool, e);
    s.available[l.u * n + l.v] = s.available[l.v * n + l.u] = avail;
    s.distance_km[l.u * n + l.v] = s.distance_km[l.v * n + l.u] = l.length_km;
  }
  s.requests = request_matrix(n, requests);
  s.pair_indicator.assign(n, 0);
  s.pair_indicator[pair.first] = 1;
  s.pair_indicator[pair.second] = 1;
  return s;
}

StateVec to_features(const LinkState& s, const FeatureScale& scale) {
  const std::size_t n = s.n;
  std::vector<double> dense(link_state_dim(n), 0.0);
  for (std::size_t k = 0; k < n * n; ++k) {
    dense[k] = clip_scale(s.available[k], scale.capacity);
    dense[n * n + k] = s.distance_km[k] / scale.distance_km;
    dense[2 * n * n + k] = clip_scale(s.requests[k], scale.request_clip);
  }
  for (std::size_t i = 0; i < n; ++i) dense[3 * n * n + i] = s.pair_indicator[i];
  return StateVec::from_dense(dense);
}

LinkContext encode_link_context(const Network& net, const ResourcePool& pool, const std::vector<Request>& requests,
                                const FeatureScale& scale) {
  const std::size_t n = net.n_nodes();
  std::vector<double> a(n * n, 0.0);
  std::vector<double> d(n * n, 0.0);
  for (LinkId e = 0; e < net.n_links(); ++e) {
    const Link& l = net.link(e);
    a[l.u * n + l.v] = a[l.v * n + l.u] = clip_scale(residual_channels(net, pool, e), scale.capacity);
    d[l.u * n + l.v] = d[l.v * n + l.u] = l.length_km / scale.distance_km;
  }
  const std::vector<int> r = request_matrix(n, requests);
  auto block = std::make_shared<SparseBlock>();
  for (std::size_t k = 0; k < n * n; ++k)
    if (a[k] != 0.0) block->push(static_cast<std::uint32_t>(k), a[k]);
  for (std::size_t k = 0; k < n * n; ++k)
    if (d[k] != 0.0) block->push(static_cast<std::uint32_t>(n * n + k), d[k]);
  for (std::size_t k = 0; k < n * n; ++k) {
    const double v = clip_scale(r[k], scale.request_clip);
    if (v != 0.0) block->push(static_cast<std::uint32_t>(2 * n * n + k), v);
  }
  return LinkContext{n, std::move(block)};
}

SparseBlock LinkContext::indicator(NodePair pair) const {
  SparseBlock local;
  local.push(static_cast<std::uint32_t>(3 * n * n + pair.first), 1.0);
  local.push(static_cast<std::uint32_t>(3 * n * n + pair.second), 1.0);
  return local;
}

StateVec LinkContext::state_for(NodePair pair) const { return StateVec(link_state_dim(n), block, indicator(pair)); }

int clamp_to_channels(const ResourcePool& pool, LinkId link, int n_channels) {
  return std::clamp(n_channels, 0, std::max(0, pool.remaining_channels(link)));
}

namespace {

int argmax_low(const std::vector<double>& q) {
  int best = 0;
  for (std::size_t i = 1; i < q.size(); ++i)
    if (q[i] > q[best]) best = static_cast<int>(i);
  return best;
}

}  // namespace

std::vector<LinkAction> select_link_actions(const Network& net, const ResourcePool& pool,
                                            const std::vector<Request>& requests, const QNetwork& qnet,
                                            double epsilon, Rng& rng) {
  const FeatureScale scale = FeatureScale::for_network(net);
  if (qnet.input_dim() != link_state_dim(net.n_nodes()))
    throw std::invalid_argument("select_link_actions: Q-network input does not match the link state dimension");
  const int max_action = static_cast<int>(qnet.output_dim()) - 1;

  const LinkContext ctx = encode_link_context(net, pool, requests, scale);
  std::vector<SparseBlock> locals;
  locals.reserve(net.n_links());
  for (const Link& l : net.links()) locals.push_back(ctx.indicator(NodePair(l.u, l.v)));
  // All links are scored against the same slot-start snapshot.
  const auto q = qnet.forward_shared(WeightSet::Prediction, ctx.block.get(), locals);

  std::vector<LinkAction> actions;
  actions.reserve(net.n_links());
  for (LinkId e = 0; e < net.n_links(); ++e) {
    const Link& l = net.link(e);
    LinkAction act;
    act.link = e;
    act.pair = NodePair(l.u, l.v);
    if (rng.uniform() < epsilon) {
      act.n_channels = static_cast<int>(rng.uniform_int(0, max_action));
    } else {
      act.n_channels = argmax_low(q[e]);
    }
    act.state = StateVec(link_state_dim(ctx.n), ctx.block, std::move(locals[e]));
    actions.push_back(std::move(act));
  }
  return actions;
}

void RewardLedger::record(ResourceId id, Provenance p) { entries_[id].push_back(std::move(p)); }

std::size_t RewardLedger::pending() const {
  std::size_t n = 0;
  for (const auto& [id, v] : entries_) n += v.size();
  return n;
}

std::vector<Transition> RewardLedger::settle(std::span<const ResourceId> used, std::span<const ResourceId> lost,
                                             const RewardConfig& rewards, const NextStateFn& next_state) {
  std::vector<Transition> out;
  std::map<NodePair, StateVec> next_cache;
  auto settle_ids = [&](std::span<const ResourceId> ids, double reward) {
    for (ResourceId id : ids) {
      auto it = entries_.find(id);
      if (it == entries_.end()) {
        ++unknown_;
        continue;
      }
      for (auto& p : it->second) {
        auto nit = next_cache.find(p.pair);
        if (nit == next_cache.end()) nit = next_cache.emplace(p.pair, next_state(p.pair)).first;
        out.push_back(Transition{std::move(p.state), p.action, reward, nit->second, false});
      }
      entries_.erase(it);
    }
  };
  settle_ids(used, rewards.used);
  settle_ids(lost, rewards.lost);
  return out;
}

std::vector<ResourceId> lineage_ids(std::span<const EntangledResource> resources) {
  std::vector<ResourceId> ids;
  for (const auto& r : resources) ids.insert(ids.end(), r.lineage.begin(), r.lineage.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

LinkSelectAgent::LinkSelectAgent(const Network& net, TrainConfig train, RewardConfig rewards, std::uint64_t seed)
    : net_(&net),
      train_(std::move(train)),
      rewards_(rewards),
      scale_(FeatureScale::for_network(net)),
      qnet_(
          [&] {
            std::vector<std::size_t> sizes{link_state_dim(net.n_nodes())};
            sizes.insert(sizes.end(), train_.hidden.begin(), train_.hidden.end());
            sizes.push_back(static_cast<std::size_t>(net.max_capacity()) + 1);
            return sizes;
          }(),
          seed),
      buffer_(train_.buffer_capacity) {}

std::vector<LinkAction> LinkSelectAgent::select(const ResourcePool& pool, const std::vector<Request>& requests,
                                                double epsilon, Rng& rng) const {
  return select_link_actions(*net_, pool, requests, qnet_, epsilon, rng);
}

void LinkSelectAgent::record(const LinkAction& action, std::span<const ResourceId> created) {
  if (created.empty()) {
    idle_.push_back({action.state, action.n_channels, action.pair});
    return;
  }
  for (ResourceId id : created) ledger_.record(id, {action.state, action.n_channels, action.pair});
}

std::size_t LinkSelectAgent::settle(const ResourcePool& pool, const std::vector<Request>& requests,
                                    std::span<const ResourceId> used, std::span<const ResourceId> lost) {
  std::optional<LinkContext> ctx;
  auto next = [&](NodePair pair) {
    if (!ctx) ctx = encode_link_context(*net_, pool, requests, scale_);
    return ctx->state_for(pair);
  };
  auto transitions = ledger_.settle(used, lost, rewards_, next);
  for (auto& p : idle_) transitions.push_back(Transition{std::move(p.state), p.action, 0.0, next(p.pair), false});
  idle_.clear();
  for (auto& t : transitions) buffer_.push(std::move(t));
  return transitions.size();
}

std::optional<SgdStepResult> LinkSelectAgent::train(Rng& rng) {
  if (buffer_.size() < train_.batch_size) return std::nullopt;
  auto batch = buffer_.sample(train_.batch_size, rng);
  SgdStepResult r = sgd_step(qnet_, batch, train_);
  ++steps_;
  if (steps_ % train_.target_sync_period == 0) qnet_.sync_target();
  return r;
}

std::vector<LinkId> shortest_hop_path(const Network& net, NodeId src, NodeId dst) {
  if (src == dst) return {};
  const std::size_t n = net.n_nodes();
  std::vector<std::optional<Neighbor>> parent(n);
  std::vector<char> seen(n, 0);
  std::queue<NodeId> frontier;
  frontier.push(src);
  seen[src] = 1;
  while (!frontier.empty()) {
    NodeId u = frontier.front();
    frontier.pop();
    if (u == dst) break;
    for (const Neighbor& nb : net.neighbors(u)) {
      if (seen[nb.node]) continue;
      seen[nb.node] = 1;
      parent[nb.node] = Neighbor{u, nb.link};
      frontier.push(nb.node);
    }
  }
  if (!seen[dst]) return {};
  std::vector<LinkId> path;
  for (NodeId cur = dst; cur != src; cur = parent[cur]->node) path.push_back(parent[cur]->link);
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<LinkAction> baseline_greedy_select(const Network& net, const ResourcePool& pool,
                                               const std::vector<Request>& requests) {
  std::vector<int> demand(net.n_links(), 0);
  for (const auto& req : requests) {
    if (req.status != RequestStatus::Pending) continue;
    for (LinkId e : shortest_hop_path(net, req.source, req.destination)) ++demand[e];
  }
  std::vector<LinkAction> actions;
  for (LinkId e = 0; e < net.n_links(); ++e) {
    if (demand[e] == 0) continue;
    const int wanted = std::max(0, demand[e] - pool.live_link_pairs(e));
    const int n = clamp_to_channels(pool, e, wanted);
    if (n == 0) continue;
    const Link& l = net.link(e);
    actions.push_back(LinkAction{e, NodePair(l.u, l.v), n, {}});
  }
  return actions;
}

// ---------------------------------------------------------------------------
// Exact small-instance allocation

namespace {

void enumerate_paths(const Network& net, NodeId cur, NodeId dst, std::size_t max_hops, std::vector<char>& on_path,
                     std::vector<LinkId>& stack, std::vector<std::vector<LinkId>>& out) {
  if (cur == dst) {
    out.push_back(stack);
    return;
  }
  if (stack.size() == max_hops) return;
  for (const Neighbor& nb : net.neighbors(cur)) {
    if (on_path[nb.node]) continue;
    on_path[nb.node] = 1;
    stack.push_back(nb.link);
    enumerate_paths(net, nb.node, dst, max_hops, on_path, stack, out);
    stack.pop_back();
    on_path[nb.node] = 0;
  }
}

double path_prob(const Network& net, const PhysicsConfig& physics, const std::vector<LinkId>& path) {
  double p = 1.0;
  for (LinkId e : path) p *= link_success_prob(net, physics, e);
  return p * std::pow(physics.swap_prob, static_cast<double>(path.size()) - 1.0);
}

bool link_disjoint(const std::vector<LinkId>& x, const std::vector<LinkId>& y) {
  for (LinkId e : x)
    if (std::find(y.begin(), y.end(), e) != y.end()) return false;
  return true;
}

// Incremental budget tracker shared by the solver and the feasibility check.
class Budget {
 public:
  Budget(const Network& net, const ExactProblem& p)
      : net_(net), p_(p), uses_(net.n_links(), 0), mem_(p.free_memory) {}

  // Adds one use of every link on the paths; returns false (and leaves the
  // state untouched) if a budget would be exceeded.
  bool add(const std::vector<const std::vector<LinkId>*>& paths) {
    std::vector<LinkId> applied;
    bool ok = true;
    for (const auto* path : paths) {
      for (LinkId e : *path) {
        if (!use(e)) {
          ok = false;
          break;
        }
        applied.push_back(e);
      }
      if (!ok) break;
    }
    if (!ok) {
      for (auto it = applied.rbegin(); it != applied.rend(); ++it) release(*it);
    }
    return ok;
  }

  void remove(const std::vector<const std::vector<LinkId>*>& paths) {
    for (auto pit = paths.rbegin(); pit != paths.rend(); ++pit)
      for (auto it = (*pit)->rbegin(); it != (*pit)->rend(); ++it) release(*it);
  }

  int new_channels(LinkId e) const { return std::max(0, uses_[e] - p_.cached_pairs[e]); }

 private:
  bool use(LinkId e) {
    ++uses_[e];
    if (uses_[e] > p_.cached_pairs[e]) {
      const Link& l = net_.link(e);
      if (new_channels(e) > p_.remaining_channels[e] || mem_[l.u] < 1 || mem_[l.v] < 1) {
        --uses_[e];
        return false;
      }
      --mem_[l.u];
      --mem_[l.v];
    }
    return true;
  }

  void release(LinkId e) {
    if (uses_[e] > p_.cached_pairs[e]) {
      const Link& l = net_.link(e);
      ++mem_[l.u];
      ++mem_[l.v];
    }
    --uses_[e];
  }

  const Network& net_;
  const ExactProblem& p_;
  std::vector<int> uses_;
  std::vector<int> mem_;
};

std::vector<const std::vector<LinkId>*> option_paths(const ExactProblem& p, std::size_t r, std::size_t opt) {
  std::vector<const std::vector<LinkId>*> out;
  for (std::size_t idx : p.options[r][opt].paths) out.push_back(&p.paths[r][idx]);
  return out;
}

}  // namespace

ExactProblem build_exact_problem(const Network& net, const PhysicsConfig& physics, const ResourcePool& pool,
                                 const std::vector<Request>& requests, const ExactSelectConfig& config) {
  std::vector<const Request*> pending;
  for (const auto& r : requests)
    if (r.status == RequestStatus::Pending) pending.push_back(&r);
  if (net.n_nodes() > config.max_nodes) {
    throw InstanceTooLarge("exact selection: " + std::to_string(net.n_nodes()) + " nodes exceeds bound " +
                           std::to_string(config.max_nodes));
  }
  if (pending.size() > config.max_requests) {
    throw InstanceTooLarge("exact selection: " + std::to_string(pending.size()) + " requests exceeds bound " +
                           std::to_string(config.max_requests));
  }

  ExactProblem p;
  for (LinkId e = 0; e < net.n_links(); ++e) {
    p.remaining_channels.push_back(pool.remaining_channels(e));
    p.cached_pairs.push_back(pool.live_link_pairs(e));
  }
  for (NodeId n = 0; n < net.n_nodes(); ++n) p.free_memory.push_back(pool.free_memory(n));

  for (const Request* req : pending) {
    const std::size_t shortest = shortest_hop_path(net, req->source, req->destination).size();
    std::vector<std::vector<LinkId>> all;
    if (shortest > 0) {
      std::vector<char> on_path(net.n_nodes(), 0);
      std::vector<LinkId> stack;
      on_path[req->source] = 1;
      enumerate_paths(net, req->source, req->destination, shortest + config.extra_hops, on_path, stack, all);
    }
    std::vector<std::pair<double, std::vector<LinkId>>> scored;
    for (auto& path : all) scored.emplace_back(path_prob(net, physics, path), std::move(path));
    std::stable_sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
      if (x.first != y.first) return x.first > y.first;
      if (x.second.size() != y.second.size()) return x.second.size() < y.second.size();
      return x.second < y.second;
    });
    if (scored.size() > config.paths_per_request) scored.resize(config.paths_per_request);

    std::vector<std::vector<LinkId>> paths;
    std::vector<double> probs;
    for (auto& [prob, path] : scored) {
      probs.push_back(prob);
      paths.push_back(std::move(path));
    }
    std::vector<ExactOption> options;
    for (std::size_t i = 0; i < paths.size(); ++i) options.push_back({{i}, probs[i]});
    if (config.redundancy >= 2) {
      for (std::size_t i = 0; i < paths.size(); ++i)
        for (std::size_t j = i + 1; j < paths.size(); ++j)
          if (link_disjoint(paths[i], paths[j]))
            options.push_back({{i, j}, 1.0 - (1.0 - probs[i]) * (1.0 - probs[j])});
    }
    std::stable_sort(options.begin(), options.end(),
                     [](const ExactOption& x, const ExactOption& y) { return x.value > y.value; });
    options.push_back({{}, 0.0});
    p.paths.push_back(std::move(paths));
    p.options.push_back(std::move(options));
  }
  return p;
}

bool exact_allocation_feasible(const Network& net, const ExactProblem& problem, std::span<const std::size_t> choice) {
  Budget budget(net, problem);
  for (std::size_t r = 0; r < choice.size(); ++r) {
    if (!budget.add(option_paths(problem, r, choice[r]))) return false;
  }
  return true;
}

ExactSolution solve_exact(const Network& net, const ExactProblem& problem) {
  const std::size_t n_req = problem.options.size();
  std::vector<double> suffix_best(n_req + 1, 0.0);
  for (std::size_t r = n_req; r-- > 0;) suffix_best[r] = suffix_best[r + 1] + problem.options[r].front().value;

  ExactSolution best;
  best.choice.assign(n_req, 0);
  for (std::size_t r = 0; r < n_req; ++r) best.choice[r] = problem.options[r].size() - 1;  // all "none"
  best.value = 0.0;

  Budget budget(net, problem);
  std::vector<std::size_t> choice(n_req, 0);
  std::size_t explored = 0;

  std::function<void(std::size_t, double)> branch = [&](std::size_t r, double value) {
    ++explored;
    if (r == n_req) {
      if (value > best.value) {
        best.value = value;
        best.choice = choice;
      }
      return;
    }
    for (std::size_t o = 0; o < problem.options[r].size(); ++o) {
      const double v = value + problem.options[r][o].value;
      // options are sorted by value, so later ones cannot beat the bound either
      if (v + suffix_best[r + 1] <= best.value) break;
      auto paths = option_paths(problem, r, o);
      if (!budget.add(paths)) continue;
      choice[r] = o;
      branch(r + 1, v);
      budget.remove(paths);
    }
  };
  if (n_req > 0) branch(0, 0.0);
  best.nodes_explored = explored;
  return best;
}

std::vector<LinkAction> baseline_exact_select(const Network& net, const PhysicsConfig& physics,
                                              const ResourcePool& pool, const std::vector<Request>& requests,
                                              const ExactSelectConfig& config) {
  const ExactProblem problem = build_exact_problem(net, physics, pool, requests, config);
  const ExactSolution sol = solve_exact(net, problem);

  std::vector<int> uses(net.n_links(), 0);
  for (std::size_t r = 0; r < sol.choice.size(); ++r)
    for (const auto* path : option_paths(problem, r, sol.choice[r]))
      for (LinkId e : *path) ++uses[e];

  std::vector<LinkAction> actions;
  for (LinkId e = 0; e < net.n_links(); ++e) {
    const int n = std::max(0, uses[e] - problem.cached_pairs[e]);
    if (n == 0) continue;
    const Link& l = net.link(e);
    actions.push_back(LinkAction{e, NodePair(l.u, l.v), n, {}});
  }
  return actions;
}

}  // namespace qroute
