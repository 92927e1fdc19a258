#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qroute/types.hpp"

namespace qroute {

struct Position {
  double x_km = 0.0;
  double y_km = 0.0;
  friend bool operator==(const Position&, const Position&) = default;
};

/// A physical quantum link. Multiplicity (parallel fibres / EPS units) is
/// carried by `capacity` rather than by duplicate records.
struct Link {
  NodeId u = 0;
  NodeId v = 0;
  double length_km = 0.0;
  int capacity = 0;

  NodeId other(NodeId n) const { return n == u ? v : u; }
  friend bool operator==(const Link&, const Link&) = default;
};

struct Neighbor {
  NodeId node;
  LinkId link;
};

struct IntRange {
  int lo = 0;
  int hi = 0;
  friend bool operator==(const IntRange&, const IntRange&) = default;
};

struct TopologyConfig {
  std::size_t n_nodes = 25;
  double area_width_km = 2000.0;
  double area_height_km = 4000.0;
  double waxman_alpha = 0.4;
  double waxman_beta = 0.6;
  IntRange capacity_range{3, 7};
  IntRange memory_range{10, 14};
  std::uint64_t seed = 1;
  int max_attempts = 1000;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Immutable physical topology. The constructor enforces every structural
/// invariant; a Network that exists is valid.
class Network {
 public:
  Network(std::vector<Position> positions, std::vector<Link> links,
          std::vector<int> memory);

  std::size_t n_nodes() const { return positions_.size(); }
  std::size_t n_links() const { return links_.size(); }

  const std::vector<Position>& positions() const { return positions_; }
  const std::vector<Link>& links() const { return links_; }
  const Link& link(LinkId id) const;
  const std::vector<int>& memory() const { return memory_; }
  int memory(NodeId n) const;

  std::span<const Neighbor> neighbors(NodeId n) const;
  std::optional<LinkId> find_link(NodeId a, NodeId b) const;

  /// Euclidean distance between node positions.
  double distance_km(NodeId u, NodeId v) const;

  /// Largest channel capacity over all links (the action-space bound l).
  int max_capacity() const { return max_capacity_; }

  /// Largest pairwise node distance.
  double diameter_km() const { return diameter_km_; }

  bool is_connected() const;

  friend bool operator==(const Network& a, const Network& b) {
    return a.positions_ == b.positions_ && a.links_ == b.links_ && a.memory_ == b.memory_;
  }

 private:
  void check_node(NodeId n) const;

  std::vector<Position> positions_;
  std::vector<Link> links_;
  std::vector<int> memory_;
  std::vector<std::vector<Neighbor>> adjacency_;
  int max_capacity_ = 0;
  double diameter_km_ = 0.0;
};

/// Waxman random geometric graph over a rectangle. Rejection-samples until
/// the graph is connected; throws TopologyError after `max_attempts`.
Network generate_waxman(const TopologyConfig& config);

nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& doc);

void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

}  // namespace qroute
