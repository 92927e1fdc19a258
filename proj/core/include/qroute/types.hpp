#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace qroute {

using NodeId = std::size_t;
using LinkId = std::size_t;
using ResourceId = std::uint64_t;
using RequestId = std::uint64_t;
using SlotIndex = std::int64_t;

/// Unordered node pair, stored with first <= second.
struct NodePair {
  NodeId first = 0;
  NodeId second = 0;

  NodePair() = default;
  NodePair(NodeId a, NodeId b) : first(a < b ? a : b), second(a < b ? b : a) {}

  bool contains(NodeId n) const { return n == first || n == second; }
  friend auto operator<=>(const NodePair&, const NodePair&) = default;
};

/// Raised for malformed or out-of-range configuration. `key` names the
/// offending field using a dotted path (e.g. "topology.n_nodes").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key.empty() ? what : key + ": " + what),
        key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// A broken simulator invariant (memory/capacity accounting, aging, ...).
/// These indicate bugs, never legitimate outcomes.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace qroute
