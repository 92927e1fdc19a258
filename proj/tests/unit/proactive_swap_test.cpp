#include <gtest/gtest.h>

#include <algorithm>

#include "fixtures.hpp"
#include "qroute/proactive_swap.hpp"

namespace qroute {
namespace {

ReserveConfig no_reserve(std::size_t max_chain = 4) {
  ReserveConfig c;
  c.reserve_fraction = 0.0;
  c.max_chain = max_chain;
  return c;
}

// Linear scorer (no hidden layer) with zero weights.
QNetwork flat_qnet(std::size_t n_nodes) {
  Weights w;
  const std::size_t d = swap_state_dim(n_nodes);
  w.layers.push_back(DenseLayer{d, 2, std::vector<double>(d * 2, 0.0), {0.0, 0.0}});
  return QNetwork(w);
}

Network triangle() {
  return testing::make_network({{0, 0}, {100, 0}, {50, 80}}, {{0, 1, 3}, {1, 2, 3}, {0, 2, 3}});
}

TEST(Candidates, TwoAdjacentPairsGiveOneCandidate) {
  const Network net = testing::line_network(3);
  ResourcePool pool(net);
  Rng rng(1);
  const auto phys = testing::certain_physics();
  const ResourceId a = testing::make_pair(pool, phys, 0, rng);
  const ResourceId b = testing::make_pair(pool, phys, 1, rng);
  const auto cands = enumerate_candidates(pool, no_reserve());
  ASSERT_EQ(cands.size(), 1u);
  EXPECT_EQ(cands[0].pair, NodePair(0, 2));
  EXPECT_EQ(cands[0].chain, (std::vector<ResourceId>{a, b}));
}

TEST(Candidates, EmptyPoolHasNone) {
  const Network net = testing::line_network(4);
  ResourcePool pool(net);
  EXPECT_TRUE(enumerate_candidates(pool, no_reserve()).empty());
}

TEST(Candidates, TriangleWithChainTwo) {
  const Network net = triangle();
  ResourcePool pool(net);
  Rng rng(2);
  const auto phys = testing::certain_physics();
  for (LinkId e = 0; e < 3; ++e) testing::make_pair(pool, phys, e, rng);
  const auto cands = enumerate_candidates(pool, no_reserve(2));
  ASSERT_EQ(cands.size(), 3u);
  for (const auto& c : cands) {
    EXPECT_EQ(c.chain.size(), 2u);
    EXPECT_TRUE(pool.chain_is_simple(c.chain));
    const auto& first = pool.resource(c.chain.front());
    const auto& last = pool.resource(c.chain.back());
    EXPECT_TRUE(first.endpoints().contains(c.pair.first));
    EXPECT_TRUE(last.endpoints().contains(c.pair.second));
  }
}

TEST(Candidates, ChainLengthBounded) {
  const Network net = testing::line_network(6);
  ResourcePool pool(net);
  Rng rng(3);
  const auto phys = testing::certain_physics();
  for (LinkId e = 0; e < 5; ++e) testing::make_pair(pool, phys, e, rng);
  // pairs at distance 2..3 on a line of 6 nodes: 4 + 3
  EXPECT_EQ(enumerate_candidates(pool, no_reserve(3)).size(), 7u);
  EXPECT_EQ(enumerate_candidates(pool, no_reserve(5)).size(), 10u);
}

TEST(Candidates, ReservedResourcesExcluded) {
  const Network net = testing::line_network(3);
  ResourcePool pool(net);
  Rng rng(4);
  const auto phys = testing::certain_physics();
  testing::make_pair(pool, phys, 0, rng);
  pool.advance_slot();
  const ResourceId young = testing::make_pair(pool, phys, 1, rng);
  const auto reserved = reserved_resources(pool, 0.25);
  EXPECT_EQ(reserved, std::set<ResourceId>{young});
  EXPECT_TRUE(enumerate_candidates(pool, no_reserve(), reserved).empty());
  EXPECT_TRUE(reserved_resources(pool, 0.0).empty());
}

TEST(Evaluation, ZeroWeightsGiveZeroQ) {
  const Network net = testing::line_network(4);
  ResourcePool pool(net);
  Rng rng(5);
  const auto phys = testing::certain_physics();
  for (LinkId e = 0; e < 3; ++e) testing::make_pair(pool, phys, e, rng);
  auto cands = enumerate_candidates(pool, no_reserve());
  evaluate_candidates(cands, flat_qnet(4), {}, pool, FeatureScale::for_network(net));
  ASSERT_EQ(cands.size(), 3u);
  for (const auto& c : cands) {
    EXPECT_EQ(c.q_value, 0.0);
    EXPECT_EQ(c.state.dim(), swap_state_dim(4));
  }
}

TEST(Evaluation, IndependentOfCandidateOrderAndThreads) {
  const Network net = testing::line_network(7);
  ResourcePool pool(net);
  Rng rng(6);
  const auto phys = testing::certain_physics();
  for (int k = 0; k < 2; ++k)
    for (LinkId e = 0; e < 6; ++e) testing::make_pair(pool, phys, e, rng);
  QNetwork qnet({swap_state_dim(7), 16, 2}, 77);
  const std::vector<Request> reqs{{0, 0, 6, 0, 10, RequestStatus::Pending}};
  const auto scale = FeatureScale::for_network(net);

  auto base = enumerate_candidates(pool, no_reserve());
  ASSERT_GT(base.size(), 5u);
  evaluate_candidates(base, qnet, reqs, pool, scale);
  std::map<NodePair, double> by_pair;
  for (const auto& c : base) by_pair[c.pair] = c.q_value;

  auto shuffled = enumerate_candidates(pool, no_reserve());
  std::reverse(shuffled.begin(), shuffled.end());
  std::rotate(shuffled.begin(), shuffled.begin() + 2, shuffled.end());
  evaluate_candidates(shuffled, qnet, reqs, pool, scale, 3);
  for (const auto& c : shuffled) EXPECT_EQ(c.q_value, by_pair.at(c.pair));
}

TEST(Evaluation, RiggedFavourite) {
  const Network net = testing::line_network(4);
  ResourcePool pool(net);
  Rng rng(7);
  const auto phys = testing::certain_physics();
  for (LinkId e = 0; e < 3; ++e) testing::make_pair(pool, phys, e, rng);
  QNetwork qnet = flat_qnet(4);
  // Q[1] responds to the endpoint indicator of node 3
  qnet.prediction().layers[0].w(2 * 16 + 3, 1) = 1.0;
  auto cands = enumerate_candidates(pool, no_reserve());
  evaluate_candidates(cands, qnet, {}, pool, FeatureScale::for_network(net));
  for (const auto& c : cands) EXPECT_EQ(c.q_value, c.pair.contains(3) ? 1.0 : 0.0);
}

TEST(SwapEncoding, CountsAndRequests) {
  const Network net = testing::line_network(3, 100.0, 4);
  ResourcePool pool(net);
  Rng rng(8);
  const auto phys = testing::certain_physics();
  testing::make_pair(pool, phys, 0, rng);
  testing::make_pair(pool, phys, 0, rng);
  const std::vector<Request> reqs{{0, 2, 0, 0, 10, RequestStatus::Pending}};
  const auto ctx = encode_swap_context(pool, reqs, FeatureScale::for_network(net));
  const auto dense = ctx.state_for(NodePair(1, 2)).dense();
  ASSERT_EQ(dense.size(), swap_state_dim(3));
  EXPECT_DOUBLE_EQ(dense[0 * 3 + 1], 0.5);
  EXPECT_DOUBLE_EQ(dense[1 * 3 + 0], 0.5);
  EXPECT_EQ(dense[1 * 3 + 2], 0.0);
  EXPECT_DOUBLE_EQ(dense[9 + 0 * 3 + 2], 0.1);
  EXPECT_DOUBLE_EQ(dense[9 + 2 * 3 + 0], 0.1);
  EXPECT_EQ(dense[18 + 0], 0.0);
  EXPECT_EQ(dense[18 + 1], 1.0);
  EXPECT_EQ(dense[18 + 2], 1.0);
}

TEST(Commit, NonPositiveQCommitsNothing) {
  const Network net = testing::line_network(4);
  ResourcePool pool(net);
  Rng rng(9);
  const auto phys = testing::certain_physics();
  for (LinkId e = 0; e < 3; ++e) testing::make_pair(pool, phys, e, rng);
  auto cands = enumerate_candidates(pool, no_reserve());
  for (auto& c : cands) c.q_value = -0.5;
  cands.front().q_value = 0.0;
  const auto events = commit_swaps(pool, phys, cands, {}, 0.0, rng);
  ASSERT_EQ(events.size(), cands.size());
  for (const auto& ev : events) EXPECT_EQ(ev.decision, SwapDecision::Rejected);
  EXPECT_EQ(pool.live_count(), 3u);
}

TEST(Commit, SingleFavourableCandidate) {
  const Network net = testing::line_network(3);
  ResourcePool pool(net);
  Rng rng(10);
  const auto phys = testing::certain_physics();
  testing::make_pair(pool, phys, 0, rng);
  testing::make_pair(pool, phys, 1, rng);
  auto cands = enumerate_candidates(pool, no_reserve());
  cands[0].q_value = 1.0;
  const auto events = commit_swaps(pool, phys, cands, {}, 0.0, rng);
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].decision, SwapDecision::Committed);
  ASSERT_TRUE(events[0].segment);
  EXPECT_EQ(pool.live_count(), 1u);
  EXPECT_EQ(pool.resource(*events[0].segment).endpoints(), NodePair(0, 2));
  EXPECT_EQ(pool.memory_used(1), 0);
  EXPECT_EQ(events[0].consumed.size(), 2u);
}

TEST(Commit, ConflictingCandidatesHigherQWins) {
  const Network net = testing::line_network(4);
  ResourcePool pool(net);
  Rng rng(11);
  const auto phys = testing::certain_physics();
  for (LinkId e = 0; e < 3; ++e) testing::make_pair(pool, phys, e, rng);
  auto cands = enumerate_candidates(pool, no_reserve(2));
  ASSERT_EQ(cands.size(), 2u);  // (0,2) and (1,3) share the middle pair
  for (auto& c : cands) c.q_value = c.pair == NodePair(1, 3) ? 2.0 : 1.0;
  const auto events = commit_swaps(pool, phys, cands, {}, 0.0, rng);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0].pair, NodePair(1, 3));
  EXPECT_EQ(events[0].decision, SwapDecision::Committed);
  EXPECT_EQ(events[1].decision, SwapDecision::Conflict);
}

TEST(Commit, BsmFailureConsumesInputs) {
  const Network net = testing::line_network(4);
  ResourcePool pool(net);
  Rng rng(12);
  const auto phys = testing::certain_physics(0.0);
  for (LinkId e = 0; e < 3; ++e) testing::make_pair(pool, phys, e, rng);
  auto cands = enumerate_candidates(pool, no_reserve());
  std::erase_if(cands, [](const SwapCandidate& c) { return c.pair != NodePair(0, 3); });
  ASSERT_EQ(cands.size(), 1u);
  cands[0].q_value = 1.0;
  const auto events = commit_swaps(pool, phys, cands, {}, 0.0, rng);
  EXPECT_EQ(events[0].decision, SwapDecision::Failed);
  // the first BSM fails, so the third pair is untouched
  EXPECT_EQ(events[0].consumed.size(), 2u);
  EXPECT_EQ(pool.live_count(), 1u);
}

TEST(Commit, FullExplorationFlipsDecisions) {
  const Network net = testing::line_network(3);
  ResourcePool pool(net);
  Rng rng(13);
  const auto phys = testing::certain_physics();
  testing::make_pair(pool, phys, 0, rng);
  testing::make_pair(pool, phys, 1, rng);
  auto cands = enumerate_candidates(pool, no_reserve());
  cands[0].q_value = -1.0;
  const auto events = commit_swaps(pool, phys, cands, {}, 1.0, rng);
  EXPECT_EQ(events[0].decision, SwapDecision::Committed);
}

// Random pools and random q: reserved resources always survive the commit.
TEST(Commit, ReserveIsNeverTouched) {
  TopologyConfig tcfg;
  tcfg.n_nodes = 12;
  tcfg.seed = 4;
  const Network net = generate_waxman(tcfg);
  const auto phys = testing::certain_physics(0.8);
  Rng rng(14);
  for (int rep = 0; rep < 40; ++rep) {
    ResourcePool pool(net);
    for (int s = 0; s < 4; ++s) {
      if (s > 0) pool.advance_slot();
      for (LinkId e = 0; e < net.n_links(); ++e) {
        const int n = std::min(pool.remaining_channels(e), static_cast<int>(rng.uniform_int(0, 2)));
        pool.attempt_entanglement(phys, e, n, rng);
      }
      pool.reset_slot_channels();
    }
    ReserveConfig rc;
    rc.reserve_fraction = 0.3;
    const auto reserved = reserved_resources(pool, rc.reserve_fraction);
    auto cands = enumerate_candidates(pool, rc, reserved);
    for (auto& c : cands) c.q_value = rng.uniform(-1.0, 1.0);
    commit_swaps(pool, phys, cands, reserved, 0.2, rng);
    for (ResourceId id : reserved) EXPECT_TRUE(pool.is_live(id));
    pool.check_invariants(phys);
  }
}

TEST(SwapAgent, TransitionsForEachDecision) {
  const Network net = testing::line_network(3);
  TrainConfig tc;
  tc.hidden = {4};
  ReserveConfig rc = no_reserve();
  ProactiveSwapAgent agent(net, tc, RewardConfig{}, rc, 1);
  EXPECT_EQ(agent.qnet().output_dim(), 2u);
  for (auto& l : agent.qnet().prediction().layers) {
    std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  Rng rng(15);

  // rejected: q = 0
  {
    ResourcePool pool(net);
    const auto phys = testing::certain_physics();
    testing::make_pair(pool, phys, 0, rng);
    testing::make_pair(pool, phys, 1, rng);
    const auto rep = agent.step(pool, phys, {}, 0.0, rng);
    EXPECT_EQ(rep.candidates, 1u);
    EXPECT_EQ(rep.committed, 0u);
    ASSERT_EQ(agent.buffer().size(), 1u);
    EXPECT_EQ(agent.buffer().at(0).action, 0);
    EXPECT_TRUE(agent.buffer().at(0).terminal);
  }
  agent.qnet().prediction().layers.back().bias[1] = 1.0;
  // committed, then the segment serves a request
  {
    ResourcePool pool(net);
    const auto phys = testing::certain_physics();
    const ResourceId a = testing::make_pair(pool, phys, 0, rng);
    testing::make_pair(pool, phys, 1, rng);
    const auto rep = agent.step(pool, phys, {}, 0.0, rng);
    EXPECT_EQ(rep.committed, 1u);
    EXPECT_EQ(agent.ledger().pending(), 1u);
    const auto seg = pool.consume(pool.live().begin()->first);
    EXPECT_TRUE(std::binary_search(seg.lineage.begin(), seg.lineage.end(), a));
    const auto used = lineage_ids(std::vector<EntangledResource>{seg});
    EXPECT_EQ(agent.settle(pool, {}, used, {}), 1u);
    EXPECT_EQ(agent.buffer().at(1).action, 1);
    EXPECT_EQ(agent.buffer().at(1).reward, 1.0);
    EXPECT_FALSE(agent.buffer().at(1).terminal);
  }
  // failed BSM: immediate -1 and the destroyed lineage is reported lost
  {
    ResourcePool pool(net);
    const auto phys = testing::certain_physics(0.0);
    const ResourceId a = testing::make_pair(pool, phys, 0, rng);
    const ResourceId b = testing::make_pair(pool, phys, 1, rng);
    const auto rep = agent.step(pool, phys, {}, 0.0, rng);
    EXPECT_EQ(rep.failed, 1u);
    EXPECT_EQ(rep.lost, (std::vector<ResourceId>{a, b}));
    EXPECT_EQ(agent.buffer().at(2).reward, -1.0);
    EXPECT_EQ(agent.buffer().at(2).action, 1);
    EXPECT_EQ(pool.live_count(), 0u);
  }
}

TEST(ReserveConfig, Validation) {
  ReserveConfig c;
  EXPECT_NO_THROW(c.validate());
  c.reserve_fraction = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.max_chain = 1;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace qroute
