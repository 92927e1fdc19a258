#include "qroute/config.hpp"

#include <fstream>
#include <set>

namespace qroute {

using nlohmann::json;

namespace {

const char* on_off(bool b) { return b ? "on" : "off"; }

json train_to_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate},   {"discount", t.discount},
          {"epsilon_start", t.epsilon_start},   {"epsilon_end", t.epsilon_end},
          {"target_sync_period", t.target_sync_period}, {"batch_size", t.batch_size},
          {"buffer_capacity", t.buffer_capacity}, {"hidden", t.hidden}};
}

// Walks one JSON object, checking types and rejecting keys nobody read.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  void done() const {
    for (const auto& [k, v] : doc_.items()) {
      if (!seen_.contains(k)) throw ConfigError(key(k), "unknown key");
    }
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  const json* find(const std::string& k) {
    seen_.insert(k);
    auto it = doc_.find(k);
    return it == doc_.end() ? nullptr : &*it;
  }

  void real(const std::string& k, double& out) {
    if (const json* v = find(k)) {
      if (!v->is_number()) throw ConfigError(key(k), "expected a number");
      out = v->get<double>();
    }
  }

  template <typename Int>
  void integer(const std::string& k, Int& out) {
    if (const json* v = find(k)) {
      if (!v->is_number_integer()) throw ConfigError(key(k), "expected an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (!v->is_number_unsigned()) throw ConfigError(key(k), "expected a non-negative integer");
        out = static_cast<Int>(v->get<std::uint64_t>());
      } else {
        out = static_cast<Int>(v->get<std::int64_t>());
      }
    }
  }

  void flag(const std::string& k, bool& out) {
    if (const json* v = find(k)) {
      if (v->is_boolean()) {
        out = v->get<bool>();
      } else if (v->is_string() && (*v == "on" || *v == "off")) {
        out = *v == "on";
      } else {
        throw ConfigError(key(k), "expected on|off");
      }
    }
  }

  void range(const std::string& k, IntRange& out) {
    if (const json* v = find(k)) {
      if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number_integer() || !(*v)[1].is_number_integer())
        throw ConfigError(key(k), "expected [lo, hi]");
      out = {(*v)[0].get<int>(), (*v)[1].get<int>()};
    }
  }

  template <typename Fn>
  void section(const std::string& k, Fn&& fn) {
    if (const json* v = find(k)) {
      Section sub(*v, key(k));
      fn(sub);
      sub.done();
    }
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_train(Section& s, TrainConfig& t) {
  s.real("learning_rate", t.learning_rate);
  s.real("discount", t.discount);
  s.real("epsilon_start", t.epsilon_start);
  s.real("epsilon_end", t.epsilon_end);
  s.integer("target_sync_period", t.target_sync_period);
  s.integer("batch_size", t.batch_size);
  s.integer("buffer_capacity", t.buffer_capacity);
  if (const json* v = s.find("hidden")) {
    if (!v->is_array()) throw ConfigError(s.key("hidden"), "expected an array of layer sizes");
    std::vector<std::size_t> sizes;
    for (const auto& h : *v) {
      if (!h.is_number_unsigned()) throw ConfigError(s.key("hidden"), "expected an array of layer sizes");
      sizes.push_back(h.get<std::size_t>());
    }
    t.hidden = std::move(sizes);
  }
}

}  // namespace

json sim_config_to_json(const SimConfig& c) {
  json ttl = c.requests.ttl == kNoExpiry ? json("inf") : json(c.requests.ttl);
  return {
      {"topology",
       {{"n_nodes", c.topology.n_nodes},
        {"area_width_km", c.topology.area_width_km},
        {"area_height_km", c.topology.area_height_km},
        {"waxman_alpha", c.topology.waxman_alpha},
        {"waxman_beta", c.topology.waxman_beta},
        {"capacity_range", {c.topology.capacity_range.lo, c.topology.capacity_range.hi}},
        {"memory_range", {c.topology.memory_range.lo, c.topology.memory_range.hi}},
        {"seed", c.topology.seed},
        {"max_attempts", c.topology.max_attempts}}},
      {"physics",
       {{"alpha", c.physics.alpha}, {"swap_prob", c.physics.swap_prob}, {"lifetime", c.physics.lifetime}}},
      {"link_agent", train_to_json(c.link_agent)},
      {"swap_agent", train_to_json(c.swap_agent)},
      {"rewards", {{"used", c.rewards.used}, {"lost", c.rewards.lost}}},
      {"reserve",
       {{"reserve_fraction", c.reserve.reserve_fraction},
        {"max_chain", c.reserve.max_chain},
        {"eval_threads", c.reserve.eval_threads}}},
      {"routing", {{"redundancy", c.routing.redundancy}}},
      {"exact",
       {{"max_nodes", c.exact.max_nodes},
        {"max_requests", c.exact.max_requests},
        {"paths_per_request", c.exact.paths_per_request},
        {"extra_hops", c.exact.extra_hops},
        {"redundancy", c.exact.redundancy}}},
      {"requests",
       {{"model", c.requests.model == ArrivalModel::Fixed ? "fixed" : "poisson"},
        {"per_slot", c.requests.per_slot},
        {"ttl", ttl}}},
      {"slots", c.slots},
      {"trials", c.trials},
      {"link_selector", to_string(c.link_selector)},
      {"caching", on_off(c.caching)},
      {"proactive", on_off(c.proactive)},
      {"seed", c.seed},
      {"warmup_fraction", c.warmup_fraction},
      {"epsilon_decay_fraction", c.epsilon_decay_fraction},
      {"check_invariants", c.check_invariants},
      {"jobs", c.jobs},
  };
}

SimConfig sim_config_from_json(const json& doc, SimConfig c) {
  Section root(doc, "");
  root.section("topology", [&](Section& s) {
    s.integer("n_nodes", c.topology.n_nodes);
    s.real("area_width_km", c.topology.area_width_km);
    s.real("area_height_km", c.topology.area_height_km);
    s.real("waxman_alpha", c.topology.waxman_alpha);
    s.real("waxman_beta", c.topology.waxman_beta);
    s.range("capacity_range", c.topology.capacity_range);
    s.range("memory_range", c.topology.memory_range);
    s.integer("seed", c.topology.seed);
    s.integer("max_attempts", c.topology.max_attempts);
  });
  root.section("physics", [&](Section& s) {
    s.real("alpha", c.physics.alpha);
    s.real("swap_prob", c.physics.swap_prob);
    s.integer("lifetime", c.physics.lifetime);
  });
  root.section("link_agent", [&](Section& s) { read_train(s, c.link_agent); });
  root.section("swap_agent", [&](Section& s) { read_train(s, c.swap_agent); });
  root.section("rewards", [&](Section& s) {
    s.real("used", c.rewards.used);
    s.real("lost", c.rewards.lost);
  });
  root.section("reserve", [&](Section& s) {
    s.real("reserve_fraction", c.reserve.reserve_fraction);
    s.integer("max_chain", c.reserve.max_chain);
    s.integer("eval_threads", c.reserve.eval_threads);
  });
  root.section("routing", [&](Section& s) { s.integer("redundancy", c.routing.redundancy); });
  root.section("exact", [&](Section& s) {
    s.integer("max_nodes", c.exact.max_nodes);
    s.integer("max_requests", c.exact.max_requests);
    s.integer("paths_per_request", c.exact.paths_per_request);
    s.integer("extra_hops", c.exact.extra_hops);
    s.integer("redundancy", c.exact.redundancy);
  });
  root.section("requests", [&](Section& s) {
    if (const json* v = s.find("model")) {
      if (*v == "fixed") {
        c.requests.model = ArrivalModel::Fixed;
      } else if (*v == "poisson") {
        c.requests.model = ArrivalModel::Poisson;
      } else {
        throw ConfigError(s.key("model"), "expected fixed|poisson");
      }
    }
    s.real("per_slot", c.requests.per_slot);
    if (const json* v = s.find("ttl")) {
      if (*v == "inf") {
        c.requests.ttl = kNoExpiry;
      } else if (v->is_number_integer()) {
        c.requests.ttl = v->get<std::int64_t>();
      } else {
        throw ConfigError(s.key("ttl"), "expected an integer or \"inf\"");
      }
    }
  });
  root.integer("slots", c.slots);
  root.integer("trials", c.trials);
  if (const json* v = root.find("link_selector")) {
    if (!v->is_string()) throw ConfigError("link_selector", "expected rl|greedy|exact");
    c.link_selector = link_selector_from_string(v->get<std::string>());
  }
  root.flag("caching", c.caching);
  root.flag("proactive", c.proactive);
  root.integer("seed", c.seed);
  root.real("warmup_fraction", c.warmup_fraction);
  root.real("epsilon_decay_fraction", c.epsilon_decay_fraction);
  if (const json* v = root.find("check_invariants")) {
    if (!v->is_boolean()) throw ConfigError("check_invariants", "expected true|false");
    c.check_invariants = v->get<bool>();
  }
  root.integer("jobs", c.jobs);
  root.done();
  return c;
}

SimConfig load_sim_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", path.string() + ": " + e.what());
  }
  SimConfig c = sim_config_from_json(doc);
  c.validate();
  return c;
}

void set_config_field(SimConfig& config, const std::string& key, const std::string& value) {
  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;
  json doc = json::object();
  json* cursor = &doc;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(key, "malformed key");
    if (dot == std::string::npos) {
      (*cursor)[part] = parsed;
      break;
    }
    cursor = &(*cursor)[part];
    start = dot + 1;
  }
  config = sim_config_from_json(doc, config);
}

}  // namespace qroute
