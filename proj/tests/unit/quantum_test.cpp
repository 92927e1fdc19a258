#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "qroute/quantum.hpp"

namespace qroute {
namespace {

using testing::certain_physics;
using testing::line_network;
using testing::make_pair;

TEST(LinkSuccessProb, HundredKilometres) {
  const Network net = line_network(2, 100.0);
  PhysicsConfig physics;
  EXPECT_NEAR(link_success_prob(net, physics, 0), 0.819, 0.001);
}

TEST(LinkSuccessProb, ZeroAttenuationIsCertain) {
  const Network net = line_network(2, 1234.5);
  PhysicsConfig physics;
  physics.alpha = 0.0;
  EXPECT_EQ(link_success_prob(net, physics, 0), 1.0);
}

TEST(LinkSuccessProb, FiveHundredKilometres) {
  const Network net = line_network(2, 500.0);
  EXPECT_NEAR(link_success_prob(net, PhysicsConfig{}, 0), std::exp(-1.0), 1e-12);
  EXPECT_NEAR(link_success_prob(net, PhysicsConfig{}, 0), 0.3679, 1e-4);
}

TEST(PhysicsConfig, Validation) {
  PhysicsConfig p;
  p.swap_prob = 1.1;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.lifetime = 0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.alpha = -0.1;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Attempt, ZeroAttemptsLeavesPoolUnchanged) {
  const Network net = line_network(2);
  ResourcePool pool(net);
  Rng rng(1);
  const auto r = pool.attempt_entanglement(PhysicsConfig{}, 0, 0, rng);
  EXPECT_TRUE(r.created.empty());
  EXPECT_EQ(pool.live_count(), 0u);
  EXPECT_EQ(pool.channels_in_use(0), 0);
}

TEST(Attempt, CertainSuccessCreatesEveryPair) {
  const Network net = line_network(2, 100.0, 5, 12);
  ResourcePool pool(net);
  Rng rng(1);
  const auto r = pool.attempt_entanglement(certain_physics(), 0, 3, rng);
  EXPECT_EQ(r.created.size(), 3u);
  EXPECT_EQ(pool.live_count(), 3u);
  EXPECT_EQ(pool.memory_used(0), 3);
  EXPECT_EQ(pool.memory_used(1), 3);
  EXPECT_EQ(pool.channels_in_use(0), 3);
  for (ResourceId id : r.created) {
    const auto& res = pool.resource(id);
    EXPECT_EQ(res.birth_slot, 0);
    EXPECT_EQ(res.hop_count(), 1u);
  }
}

TEST(Attempt, ChannelsChargedOnFailure) {
  const Network net = line_network(2, 100.0, 5, 12);
  ResourcePool pool(net);
  PhysicsConfig physics;
  physics.alpha = 1.0;  // p = e^-100
  Rng rng(1);
  const auto r = pool.attempt_entanglement(physics, 0, 4, rng);
  EXPECT_TRUE(r.created.empty());
  EXPECT_EQ(pool.channels_in_use(0), 4);
  EXPECT_EQ(pool.remaining_channels(0), 1);
}

TEST(Attempt, OverBudgetIsContractFailure) {
  const Network net = line_network(2, 100.0, 3, 12);
  ResourcePool pool(net);
  Rng rng(1);
  EXPECT_THROW(pool.attempt_entanglement(certain_physics(), 0, 4, rng), InvariantViolation);
  pool.attempt_entanglement(certain_physics(), 0, 2, rng);
  EXPECT_THROW(pool.attempt_entanglement(certain_physics(), 0, 2, rng), InvariantViolation);
}

TEST(Attempt, TruncatedToFreeMemory) {
  const Network net = line_network(2, 100.0, 7, 2);
  ResourcePool pool(net);
  Rng rng(1);
  const auto r = pool.attempt_entanglement(certain_physics(), 0, 5, rng);
  EXPECT_EQ(r.attempted, 2);
  EXPECT_EQ(r.truncated, 3);
  EXPECT_EQ(r.created.size(), 2u);
  EXPECT_EQ(pool.free_memory(0), 0);
  EXPECT_NO_THROW(pool.check_invariants(certain_physics()));
}

TEST(Attempt, BinomialMeanOfSuccesses) {
  const Network net = line_network(2, 100.0, 5, 12);
  PhysicsConfig physics;
  const double p = link_success_prob(net, physics, 0);
  ASSERT_NEAR(p, 0.8187, 1e-4);
  ResourcePool pool(net);
  Rng rng(2024);
  const int trials = 100000;
  long total = 0;
  for (int t = 0; t < trials; ++t) {
    pool.reset_slot_channels();
    const auto r = pool.attempt_entanglement(physics, 0, 5, rng);
    total += static_cast<long>(r.created.size());
    for (ResourceId id : r.created) pool.consume(id);
  }
  const double mean = static_cast<double>(total) / trials;
  EXPECT_NEAR(mean, 5 * p, 0.02);
  EXPECT_NEAR(mean, 4.094, 0.02);
}

TEST(Swap, CertainSuccessComposesEndpoints) {
  const Network net = line_network(3, 100.0);
  ResourcePool pool(net);
  Rng rng(1);
  const auto physics = certain_physics(1.0);
  const ResourceId ab = make_pair(pool, physics, 0, rng);
  pool.advance_slot();
  pool.reset_slot_channels();
  const ResourceId bc = make_pair(pool, physics, 1, rng);
  ASSERT_EQ(pool.memory_used(1), 2);

  const auto sr = pool.swap(physics, bc, ab, rng);
  ASSERT_TRUE(sr.created.has_value());
  const auto& ac = pool.resource(*sr.created);
  EXPECT_EQ(ac.endpoints(), NodePair(0, 2));
  EXPECT_EQ(ac.hop_count(), 2u);
  EXPECT_EQ(ac.birth_slot, 0);
  EXPECT_EQ(pool.memory_used(1), 0);
  EXPECT_EQ(pool.memory_used(0), 1);
  EXPECT_EQ(pool.memory_used(2), 1);
  EXPECT_FALSE(pool.is_live(ab));
  EXPECT_FALSE(pool.is_live(bc));
  ASSERT_EQ(sr.consumed.size(), 2u);
  EXPECT_EQ(sr.consumed[0].state, ResourceState::Consumed);
  EXPECT_EQ(ac.lineage, (std::vector<ResourceId>{ab, bc, *sr.created}));
  EXPECT_NO_THROW(pool.check_invariants(physics));
}

TEST(Swap, CertainFailureReleasesAllMemory) {
  const Network net = line_network(3, 100.0);
  ResourcePool pool(net);
  Rng rng(1);
  const auto physics = certain_physics(0.0);
  const ResourceId ab = make_pair(pool, physics, 0, rng);
  const ResourceId bc = make_pair(pool, physics, 1, rng);
  const auto sr = pool.swap(physics, ab, bc, rng);
  EXPECT_FALSE(sr.created.has_value());
  EXPECT_EQ(pool.live_count(), 0u);
  for (NodeId n = 0; n < 3; ++n) EXPECT_EQ(pool.memory_used(n), 0);
}

TEST(Swap, BernoulliFrequency) {
  const Network net = line_network(3, 100.0, 7, 14);
  ResourcePool pool(net);
  Rng rng(99);
  const auto physics = certain_physics(0.9);
  const int trials = 100000;
  int ok = 0;
  for (int t = 0; t < trials; ++t) {
    pool.reset_slot_channels();
    const ResourceId ab = make_pair(pool, physics, 0, rng);
    const ResourceId bc = make_pair(pool, physics, 1, rng);
    const auto sr = pool.swap(physics, ab, bc, rng);
    if (sr.created) {
      ++ok;
      pool.consume(*sr.created);
    }
  }
  EXPECT_NEAR(static_cast<double>(ok) / trials, 0.9, 0.005);
}

TEST(Swap, RejectsNonAdjacentAndOverlapping) {
  const Network net = line_network(4, 100.0);
  ResourcePool pool(net);
  Rng rng(1);
  const auto physics = certain_physics(1.0);
  const ResourceId ab = make_pair(pool, physics, 0, rng);
  const ResourceId cd = make_pair(pool, physics, 2, rng);
  EXPECT_THROW(pool.swap(physics, ab, cd, rng), std::invalid_argument);
  EXPECT_THROW(pool.swap(physics, ab, ab, rng), std::invalid_argument);

  const ResourceId ab2 = make_pair(pool, physics, 0, rng);
  EXPECT_THROW(pool.swap(physics, ab, ab2, rng), std::invalid_argument);  // two shared endpoints

  // a-c segment and c-b pair share endpoint c but their paths meet at b too
  const ResourceId bc = make_pair(pool, physics, 1, rng);
  const auto ac = pool.swap(physics, ab2, bc, rng).created.value();
  const ResourceId bc2 = make_pair(pool, physics, 1, rng);
  EXPECT_FALSE(pool.chain_is_simple(std::vector<ResourceId>{ac, bc2}));
  EXPECT_THROW(pool.swap(physics, ac, bc2, rng), std::invalid_argument);
  EXPECT_TRUE(pool.chain_is_simple(std::vector<ResourceId>{ac, cd}));
  EXPECT_EQ(pool.live_count(), 4u);  // rejected swaps consume nothing
}

TEST(Expire, LifetimeOneDropsEverythingFromEarlierSlots) {
  const Network net = line_network(2);
  ResourcePool pool(net);
  Rng rng(1);
  const auto physics = certain_physics(1.0, 1);
  pool.attempt_entanglement(physics, 0, 3, rng);
  EXPECT_TRUE(pool.expire_cache(physics).empty());
  pool.advance_slot();
  const auto gone = pool.expire_cache(physics);
  EXPECT_EQ(gone.size(), 3u);
  for (const auto& r : gone) EXPECT_EQ(r.state, ResourceState::Expired);
  EXPECT_EQ(pool.memory_used(0), 0);
}

TEST(Expire, BoundaryArithmetic) {
  const Network net = line_network(2);
  ResourcePool pool(net);
  Rng rng(1);
  const auto physics = certain_physics(1.0, 10);
  for (int s = 0; s < 5; ++s) pool.advance_slot();
  const ResourceId id = make_pair(pool, physics, 0, rng);  // born slot 5
  while (pool.current_slot() < 14) {
    pool.advance_slot();
    EXPECT_TRUE(pool.expire_cache(physics).empty());
  }
  EXPECT_TRUE(pool.is_live(id));
  pool.advance_slot();
  const auto gone = pool.expire_cache(physics);
  ASSERT_EQ(gone.size(), 1u);
  EXPECT_EQ(gone[0].id, id);
}

TEST(Expire, EmptyPool) {
  const Network net = line_network(2);
  ResourcePool pool(net);
  EXPECT_TRUE(pool.expire_cache(PhysicsConfig{}).empty());
}

TEST(Expire, SegmentAgesFromOldestConstituent) {
  const Network net = line_network(3);
  ResourcePool pool(net);
  Rng rng(1);
  const auto physics = certain_physics(1.0, 3);
  const ResourceId ab = make_pair(pool, physics, 0, rng);
  pool.advance_slot();
  pool.advance_slot();
  pool.reset_slot_channels();
  const ResourceId bc = make_pair(pool, physics, 1, rng);
  const ResourceId ac = pool.swap(physics, ab, bc, rng).created.value();
  pool.advance_slot();
  ASSERT_EQ(pool.expire_cache(physics).size(), 1u);
  EXPECT_FALSE(pool.is_live(ac));
}

TEST(ResetChannels, RestoresFullBudget) {
  const Network net = line_network(3, 100.0, 4);
  ResourcePool pool(net);
  Rng rng(1);
  pool.attempt_entanglement(certain_physics(), 0, 4, rng);
  pool.attempt_entanglement(certain_physics(), 1, 2, rng);
  const auto live = pool.live_count();
  pool.reset_slot_channels();
  EXPECT_EQ(pool.remaining_channels(0), 4);
  EXPECT_EQ(pool.remaining_channels(1), 4);
  pool.reset_slot_channels();
  EXPECT_EQ(pool.remaining_channels(0), 4);
  EXPECT_EQ(pool.live_count(), live);
  EXPECT_EQ(pool.memory_used(1), 6);
}

// Random operation sequences: the incremental counters must always agree
// with a from-scratch recount, and swaps must conserve the Live count.
TEST(PoolProperties, RandomOperationFuzz) {
  TopologyConfig cfg;
  cfg.n_nodes = 12;
  cfg.seed = 4;
  const Network net = generate_waxman(cfg);
  PhysicsConfig physics;
  physics.alpha = 0.0005;
  physics.swap_prob = 0.7;
  physics.lifetime = 4;
  ResourcePool pool(net);
  Rng rng(77);
  for (int step = 0; step < 3000; ++step) {
    const double op = rng.uniform();
    if (op < 0.1) {
      pool.advance_slot();
      pool.reset_slot_channels();
      pool.expire_cache(physics);
      for (const auto& [id, r] : pool.live()) ASSERT_LT(pool.current_slot() - r.birth_slot, physics.lifetime);
    } else if (op < 0.6) {
      const auto link = static_cast<LinkId>(rng.uniform_int(0, static_cast<std::int64_t>(net.n_links()) - 1));
      const int n = static_cast<int>(rng.uniform_int(0, pool.remaining_channels(link)));
      pool.attempt_entanglement(physics, link, n, rng);
    } else {
      // pick a random live resource and a partner sharing one endpoint
      if (pool.live_count() < 2) continue;
      auto it = pool.live().begin();
      std::advance(it, rng.uniform_int(0, static_cast<std::int64_t>(pool.live_count()) - 1));
      const EntangledResource x = it->second;
      std::vector<ResourceId> partners;
      for (const auto& [id, y] : pool.live()) {
        if (id == x.id) continue;
        const bool one_shared = (x.a() == y.a() || x.a() == y.b()) != (x.b() == y.a() || x.b() == y.b());
        if (one_shared && pool.chain_is_simple(std::vector<ResourceId>{x.id, id})) partners.push_back(id);
      }
      if (partners.empty()) continue;
      const ResourceId y = partners[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(partners.size()) - 1))];
      const auto before = pool.live_count();
      const auto sr = pool.swap(physics, x.id, y, rng);
      ASSERT_EQ(pool.live_count(), before - 2 + (sr.created ? 1 : 0));
    }
    ASSERT_NO_THROW(pool.check_invariants(physics)) << "step " << step;
  }
}

}  // namespace
}  // namespace qroute
