#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "qroute/topology.hpp"

namespace qroute {
namespace {

namespace fs = std::filesystem;

std::set<std::pair<NodeId, NodeId>> link_set(const Network& net) {
  std::set<std::pair<NodeId, NodeId>> out;
  for (const auto& l : net.links()) out.emplace(l.u, l.v);
  return out;
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("qroute_topology_" + name);
}

TEST(Waxman, SingleNodeHasNoLinks) {
  TopologyConfig cfg;
  cfg.n_nodes = 1;
  const Network net = generate_waxman(cfg);
  EXPECT_EQ(net.n_nodes(), 1u);
  EXPECT_EQ(net.n_links(), 0u);
  EXPECT_TRUE(net.is_connected());
}

TEST(Waxman, TwoNodesWithForcedProbabilityAlwaysLinked) {
  TopologyConfig cfg;
  cfg.n_nodes = 2;
  cfg.waxman_beta = 1.0;
  cfg.waxman_alpha = 1e12;
  cfg.max_attempts = 1;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    cfg.seed = seed;
    const Network net = generate_waxman(cfg);
    ASSERT_EQ(net.n_links(), 1u);
  }
}

TEST(Waxman, SameSeedSameLinkSet) {
  TopologyConfig cfg;
  cfg.n_nodes = 50;
  cfg.seed = 42;
  const auto reference = link_set(generate_waxman(cfg));
  EXPECT_FALSE(reference.empty());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(link_set(generate_waxman(cfg)), reference);
}

TEST(Waxman, ByteIdenticalSerialisation) {
  TopologyConfig cfg;
  cfg.seed = 9;
  EXPECT_EQ(network_to_json(generate_waxman(cfg)).dump(), network_to_json(generate_waxman(cfg)).dump());
  cfg.seed = 10;
  EXPECT_NE(network_to_json(generate_waxman(cfg)).dump(), network_to_json(generate_waxman({})).dump());
}

TEST(Waxman, DefaultRangesRespected) {
  TopologyConfig cfg;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    cfg.seed = seed;
    const Network net = generate_waxman(cfg);
    EXPECT_TRUE(net.is_connected());
    for (const auto& l : net.links()) {
      EXPECT_GE(l.capacity, 3);
      EXPECT_LE(l.capacity, 7);
      EXPECT_NE(l.u, l.v);
      EXPECT_NEAR(l.length_km, net.distance_km(l.u, l.v), 1e-9 * l.length_km);
    }
    for (int m : net.memory()) {
      EXPECT_GE(m, 10);
      EXPECT_LE(m, 14);
    }
  }
}

// With two nodes the single candidate edge has length L, so a single draw
// includes it with probability beta * exp(-1 / alpha). max_attempts = 1
// exposes the raw draw: generation succeeds iff the edge was included.
TEST(Waxman, EdgeInclusionFrequencyMatchesFormula) {
  for (auto [alpha, beta] : {std::pair{0.4, 0.6}, std::pair{1.0, 0.8}}) {
    TopologyConfig cfg;
    cfg.n_nodes = 2;
    cfg.waxman_alpha = alpha;
    cfg.waxman_beta = beta;
    cfg.max_attempts = 1;
    int included = 0;
    const int trials = 10000;
    for (int s = 0; s < trials; ++s) {
      cfg.seed = static_cast<std::uint64_t>(s);
      try {
        included += generate_waxman(cfg).n_links() == 1 ? 1 : 0;
      } catch (const TopologyError&) {
      }
    }
    const double expected = beta * std::exp(-1.0 / alpha);
    EXPECT_NEAR(static_cast<double>(included) / trials, expected, 0.02) << "alpha=" << alpha;
  }
}

TEST(Waxman, DegenerateConfigGivesUp) {
  TopologyConfig cfg;
  cfg.n_nodes = 30;
  cfg.waxman_alpha = 1e-6;
  cfg.waxman_beta = 1e-6;
  cfg.max_attempts = 5;
  EXPECT_THROW(generate_waxman(cfg), TopologyError);
}

TEST(Waxman, InvalidConfigNamesField) {
  TopologyConfig cfg;
  cfg.waxman_beta = 1.5;
  try {
    generate_waxman(cfg);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "topology.waxman_beta");
  }
  cfg = {};
  cfg.capacity_range = {5, 4};
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Distance, ThreeFourFive) {
  const Network net = testing::make_network({{0, 0}, {3, 4}}, {{0, 1, 1}});
  EXPECT_DOUBLE_EQ(net.distance_km(0, 1), 5.0);
  EXPECT_DOUBLE_EQ(net.distance_km(1, 0), 5.0);
}

TEST(Distance, IdentityIsZero) {
  const Network net = testing::line_network(3);
  for (NodeId n = 0; n < 3; ++n) EXPECT_EQ(net.distance_km(n, n), 0.0);
}

TEST(Distance, TriangleInequalityOnSampledTriples) {
  TopologyConfig cfg;
  cfg.n_nodes = 40;
  const Network net = generate_waxman(cfg);
  Rng rng(5);
  for (int i = 0; i < 5000; ++i) {
    const auto u = static_cast<NodeId>(rng.uniform_int(0, 39));
    const auto v = static_cast<NodeId>(rng.uniform_int(0, 39));
    const auto w = static_cast<NodeId>(rng.uniform_int(0, 39));
    EXPECT_LE(net.distance_km(u, w), net.distance_km(u, v) + net.distance_km(v, w) + 1e-9);
    EXPECT_EQ(net.distance_km(u, v), net.distance_km(v, u));
  }
}

TEST(Distance, InvalidIdRejected) {
  const Network net = testing::line_network(3);
  EXPECT_THROW(net.distance_km(0, 3), std::out_of_range);
}

TEST(NetworkIo, SaveLoadRoundTrip) {
  TopologyConfig cfg;
  cfg.seed = 3;
  const Network net = generate_waxman(cfg);
  const auto path = temp_file("roundtrip.json");
  save_network(net, path);
  const Network back = load_network(path);
  EXPECT_TRUE(back == net);
  EXPECT_EQ(network_to_json(back).dump(), network_to_json(net).dump());
  fs::remove(path);
}

TEST(NetworkIo, HandWrittenLineFixture) {
  const auto doc = nlohmann::json::parse(R"({
    "n_nodes": 4,
    "positions": [[0, 0], [100, 0], [200, 0], [300, 0]],
    "links": [{"u": 0, "v": 1, "length_km": 100.0, "capacity": 4},
              {"u": 1, "v": 2, "length_km": 100.0, "capacity": 4},
              {"u": 2, "v": 3, "length_km": 100.0, "capacity": 4}],
    "memory": [10, 10, 10, 10]
  })");
  const Network net = network_from_json(doc);
  EXPECT_EQ(net.n_links(), 3u);
  EXPECT_EQ(net.neighbors(1).size(), 2u);
  EXPECT_TRUE(net.find_link(2, 3).has_value());
  EXPECT_FALSE(net.find_link(0, 3).has_value());
}

TEST(NetworkIo, DuplicatePairNamed) {
  const auto doc = nlohmann::json::parse(R"({
    "n_nodes": 2,
    "positions": [[0, 0], [100, 0]],
    "links": [{"u": 0, "v": 1, "length_km": 100.0, "capacity": 4},
              {"u": 1, "v": 0, "length_km": 100.0, "capacity": 3}],
    "memory": [10, 10]
  })");
  try {
    network_from_json(doc);
    FAIL() << "duplicate accepted";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("(0, 1)"), std::string::npos) << e.what();
  }
}

TEST(NetworkIo, DisconnectedAndBadFieldsRejected) {
  auto doc = nlohmann::json::parse(R"({
    "n_nodes": 3,
    "positions": [[0, 0], [100, 0], [500, 0]],
    "links": [{"u": 0, "v": 1, "length_km": 100.0, "capacity": 4}],
    "memory": [10, 10, 10]
  })");
  EXPECT_THROW(network_from_json(doc), std::exception);

  doc["links"].push_back({{"u", 1}, {"v", 2}, {"length_km", 123.0}, {"capacity", 4}});
  try {
    network_from_json(doc);
    FAIL() << "length mismatch accepted";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("links[1].length_km"), std::string::npos) << e.what();
  }

  doc["links"][1]["length_km"] = 400.0;
  EXPECT_NO_THROW(network_from_json(doc));
  doc["colour"] = "blue";
  EXPECT_THROW(network_from_json(doc), std::exception);
}

TEST(NetworkIo, SelfLoopRejected) {
  EXPECT_THROW(testing::make_network({{0, 0}, {1, 0}}, {{0, 0, 1}, {0, 1, 1}}), TopologyError);
}

}  // namespace
}  // namespace qroute
