#include "qroute/topology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qroute/rng.hpp"

namespace qroute {

namespace {

double euclid(const Position& a, const Position& b) {
  return std::hypot(a.x_km - b.x_km, a.y_km - b.y_km);
}

std::string pair_str(NodeId u, NodeId v) {
  std::ostringstream os;
  os << "(" << u << ", " << v << ")";
  return os.str();
}

}  // namespace

void TopologyConfig::validate() const {
  if (n_nodes == 0) throw ConfigError("topology.n_nodes", "must be at least 1");
  if (!(area_width_km > 0.0)) throw ConfigError("topology.area_width_km", "must be positive");
  if (!(area_height_km > 0.0)) throw ConfigError("topology.area_height_km", "must be positive");
  // alpha scales distance, so values above 1 are meaningful (alpha -> inf
  // removes the distance decay entirely).
  if (!(waxman_alpha > 0.0)) throw ConfigError("topology.waxman_alpha", "must be positive");
  if (!(waxman_beta > 0.0 && waxman_beta <= 1.0))
    throw ConfigError("topology.waxman_beta", "must lie in (0, 1]");
  if (capacity_range.lo < 1 || capacity_range.hi < capacity_range.lo)
    throw ConfigError("topology.capacity_range", "must be a non-empty range of positive integers");
  if (memory_range.lo < 1 || memory_range.hi < memory_range.lo)
    throw ConfigError("topology.memory_range", "must be a non-empty range of positive integers");
  if (max_attempts < 1) throw ConfigError("topology.max_attempts", "must be at least 1");
}

Network::Network(std::vector<Position> positions, std::vector<Link> links,
                 std::vector<int> memory)
    : positions_(std::move(positions)), links_(std::move(links)), memory_(std::move(memory)) {
  const std::size_t n = positions_.size();
  if (n == 0) throw TopologyError("network must contain at least one node");
  if (memory_.size() != n) {
    throw TopologyError("memory: expected " + std::to_string(n) + " entries, got " +
                        std::to_string(memory_.size()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(positions_[i].x_km) || !std::isfinite(positions_[i].y_km))
      throw TopologyError("positions[" + std::to_string(i) + "]: non-finite coordinate");
    if (memory_[i] < 1)
      throw TopologyError("memory[" + std::to_string(i) + "]: must be positive");
  }

  adjacency_.assign(n, {});
  std::map<NodePair, LinkId> seen;
  for (LinkId id = 0; id < links_.size(); ++id) {
    const Link& l = links_[id];
    const std::string where = "links[" + std::to_string(id) + "]";
    if (l.u >= n || l.v >= n) throw TopologyError(where + ": endpoint out of range");
    if (l.u == l.v) throw TopologyError(where + ": self-loop on node " + std::to_string(l.u));
    if (l.capacity < 1) throw TopologyError(where + ".capacity: must be positive");
    const double d = euclid(positions_[l.u], positions_[l.v]);
    if (!(l.length_km > 0.0)) throw TopologyError(where + ".length_km: must be positive");
    if (std::abs(l.length_km - d) > 1e-9 * d)
      throw TopologyError(where + ".length_km: does not match node positions");
    auto [it, inserted] = seen.emplace(NodePair(l.u, l.v), id);
    if (!inserted) {
      throw TopologyError(where + ": duplicate link for pair " + pair_str(it->first.first, it->first.second));
    }
    adjacency_[l.u].push_back({l.v, id});
    adjacency_[l.v].push_back({l.u, id});
    max_capacity_ = std::max(max_capacity_, l.capacity);
  }
  for (auto& adj : adjacency_) {
    std::sort(adj.begin(), adj.end(), [](const Neighbor& a, const Neighbor& b) { return a.node < b.node; });
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      diameter_km_ = std::max(diameter_km_, euclid(positions_[i], positions_[j]));

  if (!is_connected()) throw TopologyError("links: network is not connected");
}

void Network::check_node(NodeId n) const {
  if (n >= positions_.size())
    throw std::out_of_range("node id " + std::to_string(n) + " out of range");
}

const Link& Network::link(LinkId id) const {
  if (id >= links_.size()) throw std::out_of_range("link id " + std::to_string(id) + " out of range");
  return links_[id];
}

int Network::memory(NodeId n) const {
  check_node(n);
  return memory_[n];
}

std::span<const Neighbor> Network::neighbors(NodeId n) const {
  check_node(n);
  return adjacency_[n];
}

std::optional<LinkId> Network::find_link(NodeId a, NodeId b) const {
  check_node(a);
  check_node(b);
  const auto& adj = adjacency_[a];
  auto it = std::lower_bound(adj.begin(), adj.end(), b,
                             [](const Neighbor& nb, NodeId key) { return nb.node < key; });
  if (it != adj.end() && it->node == b) return it->link;
  return std::nullopt;
}

double Network::distance_km(NodeId u, NodeId v) const {
  check_node(u);
  check_node(v);
  if (u == v) return 0.0;
  return euclid(positions_[u], positions_[v]);
}

bool Network::is_connected() const {
  const std::size_t n = positions_.size();
  if (n <= 1) return true;
  std::vector<char> seen(n, 0);
  std::queue<NodeId> frontier;
  frontier.push(0);
  seen[0] = 1;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    NodeId cur = frontier.front();
    frontier.pop();
    for (const Neighbor& nb : adjacency_[cur]) {
      if (!seen[nb.node]) {
        seen[nb.node] = 1;
        ++reached;
        frontier.push(nb.node);
      }
    }
  }
  return reached == n;
}

Network generate_waxman(const TopologyConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t n = config.n_nodes;

  for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
    std::vector<Position> pos(n);
    for (auto& p : pos) {
      p.x_km = rng.uniform(0.0, config.area_width_km);
      p.y_km = rng.uniform(0.0, config.area_height_km);
    }
    double max_dist = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) max_dist = std::max(max_dist, euclid(pos[i], pos[j]));

    std::vector<Link> links;
    for (std::size_t u = 0; u < n; ++u) {
      for (std::size_t v = u + 1; v < n; ++v) {
        const double d = euclid(pos[u], pos[v]);
        const double p = config.waxman_beta * std::exp(-d / (config.waxman_alpha * max_dist));
        if (rng.uniform() < p) {
          const int cap = static_cast<int>(rng.uniform_int(config.capacity_range.lo, config.capacity_range.hi));
          links.push_back({u, v, d, cap});
        }
      }
    }
    std::vector<int> memory(n);
    for (auto& m : memory)
      m = static_cast<int>(rng.uniform_int(config.memory_range.lo, config.memory_range.hi));

    try {
      return Network(std::move(pos), std::move(links), std::move(memory));
    } catch (const TopologyError&) {
      // disconnected (or degenerate coincident placement); redraw
    }
  }
  throw TopologyError("waxman: no connected graph after " + std::to_string(config.max_attempts) +
                      " attempts; config is degenerate");
}

nlohmann::json network_to_json(const Network& net) {
  nlohmann::json doc;
  doc["n_nodes"] = net.n_nodes();
  auto& positions = doc["positions"] = nlohmann::json::array();
  for (const auto& p : net.positions()) positions.push_back({p.x_km, p.y_km});
  auto& links = doc["links"] = nlohmann::json::array();
  for (const auto& l : net.links())
    links.push_back({{"u", l.u}, {"v", l.v}, {"length_km", l.length_km}, {"capacity", l.capacity}});
  doc["memory"] = net.memory();
  return doc;
}

namespace {

const nlohmann::json& require(const nlohmann::json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw TopologyError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw TopologyError(path + "." + key + ": missing field");
  return *it;
}

std::int64_t as_int(const nlohmann::json& v, const std::string& path) {
  if (!v.is_number_integer()) throw TopologyError(path + ": expected an integer");
  return v.get<std::int64_t>();
}

NodeId as_node(const nlohmann::json& v, const std::string& path) {
  std::int64_t x = as_int(v, path);
  if (x < 0) throw TopologyError(path + ": node id must be non-negative");
  return static_cast<NodeId>(x);
}

double as_real(const nlohmann::json& v, const std::string& path) {
  if (!v.is_number()) throw TopologyError(path + ": expected a number");
  return v.get<double>();
}

}  // namespace

Network network_from_json(const nlohmann::json& doc) {
  const std::string root = "network";
  const auto n_nodes = as_int(require(doc, "n_nodes", root), "n_nodes");
  if (n_nodes < 1) throw TopologyError("n_nodes: must be at least 1");
  for (const auto& [key, _] : doc.items()) {
    if (key != "n_nodes" && key != "positions" && key != "links" && key != "memory")
      throw TopologyError(key + ": unknown field");
  }

  const auto& jpos = require(doc, "positions", root);
  if (!jpos.is_array() || jpos.size() != static_cast<std::size_t>(n_nodes))
    throw TopologyError("positions: expected an array of n_nodes entries");
  std::vector<Position> positions;
  for (std::size_t i = 0; i < jpos.size(); ++i) {
    const std::string path = "positions[" + std::to_string(i) + "]";
    if (!jpos[i].is_array() || jpos[i].size() != 2) throw TopologyError(path + ": expected [x, y]");
    positions.push_back({as_real(jpos[i][0], path + "[0]"), as_real(jpos[i][1], path + "[1]")});
  }

  const auto& jlinks = require(doc, "links", root);
  if (!jlinks.is_array()) throw TopologyError("links: expected an array");
  std::vector<Link> links;
  for (std::size_t i = 0; i < jlinks.size(); ++i) {
    const std::string path = "links[" + std::to_string(i) + "]";
    const auto& jl = jlinks[i];
    Link l;
    l.u = as_node(require(jl, "u", path), path + ".u");
    l.v = as_node(require(jl, "v", path), path + ".v");
    l.length_km = as_real(require(jl, "length_km", path), path + ".length_km");
    l.capacity = static_cast<int>(as_int(require(jl, "capacity", path), path + ".capacity"));
    links.push_back(l);
  }

  const auto& jmem = require(doc, "memory", root);
  if (!jmem.is_array()) throw TopologyError("memory: expected an array");
  std::vector<int> memory;
  for (std::size_t i = 0; i < jmem.size(); ++i)
    memory.push_back(static_cast<int>(as_int(jmem[i], "memory[" + std::to_string(i) + "]")));

  return Network(std::move(positions), std::move(links), std::move(memory));
}

void save_network(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << network_to_json(net).dump(2) << "\n";
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw TopologyError(path.string() + ": " + e.what());
  }
  return network_from_json(doc);
}

}  // namespace qroute
