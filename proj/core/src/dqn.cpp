#include "qroute/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "qroute/types.hpp"

namespace qroute {

StateVec::StateVec(std::size_t dim, std::shared_ptr<const SparseBlock> shared, SparseBlock local)
    : dim_(dim), shared_(std::move(shared)), local_(std::move(local)) {
  std::int64_t last = -1;
  auto check = [&](std::uint32_t i, double) {
    if (static_cast<std::int64_t>(i) <= last || i >= dim_)
      throw std::invalid_argument("StateVec: indices must be increasing and below dim");
    last = i;
  };
  for_each(check);
}

StateVec StateVec::from_dense(std::span<const double> dense) {
  SparseBlock local;
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (dense[i] != 0.0) local.push(static_cast<std::uint32_t>(i), dense[i]);
  }
  return StateVec(dense.size(), nullptr, std::move(local));
}

std::vector<double> StateVec::dense() const {
  std::vector<double> out(dim_, 0.0);
  for_each([&](std::uint32_t i, double v) { out[i] = v; });
  return out;
}

void TrainConfig::validate(const std::string& prefix) const {
  if (!(learning_rate > 0.0)) throw ConfigError(prefix + ".learning_rate", "must be positive");
  if (!(discount >= 0.0 && discount < 1.0)) throw ConfigError(prefix + ".discount", "must lie in [0, 1)");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0))
    throw ConfigError(prefix + ".epsilon_start", "must lie in [0, 1]");
  if (!(epsilon_end >= 0.0 && epsilon_end <= 1.0)) throw ConfigError(prefix + ".epsilon_end", "must lie in [0, 1]");
  if (epsilon_decay_steps < 0) throw ConfigError(prefix + ".epsilon_decay_steps", "must be >= 0");
  if (target_sync_period < 1) throw ConfigError(prefix + ".target_sync_period", "must be >= 1");
  if (batch_size < 1) throw ConfigError(prefix + ".batch_size", "must be >= 1");
  if (buffer_capacity < batch_size) throw ConfigError(prefix + ".buffer_capacity", "must be >= batch_size");
  for (std::size_t h : hidden) {
    if (h == 0) throw ConfigError(prefix + ".hidden", "layer sizes must be positive");
  }
}

double epsilon_at(const TrainConfig& config, std::int64_t step) {
  if (step <= 0) return config.epsilon_start;
  if (step >= config.epsilon_decay_steps) return config.epsilon_end;
  const double frac = static_cast<double>(step) / static_cast<double>(config.epsilon_decay_steps);
  return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start);
}

QNetwork::QNetwork(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed, bool use_bias)
    : use_bias_(use_bias) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("QNetwork: need at least input and output sizes");
  Rng rng(seed);
  for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
    DenseLayer layer;
    layer.in = layer_sizes[k];
    layer.out = layer_sizes[k + 1];
    if (layer.in == 0 || layer.out == 0) throw std::invalid_argument("QNetwork: zero-width layer");
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
    layer.weights.resize(layer.in * layer.out);
    for (double& w : layer.weights) w = rng.uniform(-bound, bound);
    layer.bias.assign(layer.out, 0.0);
    prediction_.layers.push_back(std::move(layer));
  }
  target_ = prediction_;
}

QNetwork::QNetwork(Weights prediction, bool use_bias) : prediction_(std::move(prediction)), use_bias_(use_bias) {
  if (prediction_.layers.empty()) throw std::invalid_argument("QNetwork: no layers");
  for (std::size_t k = 0; k < prediction_.layers.size(); ++k) {
    const auto& l = prediction_.layers[k];
    if (l.weights.size() != l.in * l.out || l.bias.size() != l.out)
      throw std::invalid_argument("QNetwork: layer " + std::to_string(k) + " has inconsistent shape");
    if (k > 0 && prediction_.layers[k - 1].out != l.in)
      throw std::invalid_argument("QNetwork: layer " + std::to_string(k) + " input does not match previous output");
  }
  target_ = prediction_;
}

namespace {

// z += x * W[i, :]
inline void axpy_row(std::vector<double>& z, const DenseLayer& layer, std::size_t i, double x) {
  const double* row = layer.weights.data() + i * layer.out;
  for (std::size_t j = 0; j < layer.out; ++j) z[j] += x * row[j];
}

std::vector<double> first_layer(const DenseLayer& layer, const StateVec& s) {
  std::vector<double> z = layer.bias;
  s.for_each([&](std::uint32_t i, double x) { axpy_row(z, layer, i, x); });
  return z;
}

// Runs hidden/output layers k >= 1 given the first pre-activation. Keeps
// the intermediate pre-activations when `trace` is non-null.
std::vector<double> run_tail(const Weights& w, std::vector<double> z,
                             std::vector<std::vector<double>>* trace) {
  for (std::size_t k = 1; k < w.layers.size(); ++k) {
    const DenseLayer& layer = w.layers[k];
    std::vector<double> next = layer.bias;
    for (std::size_t i = 0; i < layer.in; ++i) {
      const double a = z[i] > 0.0 ? z[i] : 0.0;
      if (a != 0.0) axpy_row(next, layer, i, a);
    }
    if (trace) trace->push_back(std::move(z));
    z = std::move(next);
  }
  return z;
}

}  // namespace

std::vector<double> QNetwork::finish_forward(const Weights& w, std::vector<double> pre_activation) const {
  return run_tail(w, std::move(pre_activation), nullptr);
}

std::vector<double> QNetwork::forward(WeightSet which, std::span<const double> state) const {
  if (state.size() != input_dim()) {
    throw std::invalid_argument("forward: state has " + std::to_string(state.size()) + " entries, expected " +
                                std::to_string(input_dim()));
  }
  return forward(which, StateVec::from_dense(state));
}

std::vector<double> QNetwork::forward(WeightSet which, const StateVec& state) const {
  if (state.dim() != input_dim()) {
    throw std::invalid_argument("forward: state has dimension " + std::to_string(state.dim()) + ", expected " +
                                std::to_string(input_dim()));
  }
  const Weights& w = weights(which);
  return finish_forward(w, first_layer(w.layers.front(), state));
}

std::vector<std::vector<double>> QNetwork::forward_shared(WeightSet which, const SparseBlock* shared,
                                                          std::span<const SparseBlock> locals) const {
  const Weights& w = weights(which);
  const DenseLayer& first = w.layers.front();
  std::vector<double> base = first.bias;
  if (shared) {
    for (std::size_t k = 0; k < shared->size(); ++k) {
      if (shared->index[k] >= first.in) throw std::invalid_argument("forward_shared: index out of range");
      axpy_row(base, first, shared->index[k], shared->value[k]);
    }
  }
  std::vector<std::vector<double>> out;
  out.reserve(locals.size());
  for (const SparseBlock& local : locals) {
    std::vector<double> z = base;
    for (std::size_t k = 0; k < local.size(); ++k) {
      if (local.index[k] >= first.in) throw std::invalid_argument("forward_shared: index out of range");
      axpy_row(z, first, local.index[k], local.value[k]);
    }
    out.push_back(finish_forward(w, std::move(z)));
  }
  return out;
}

double bellman_target(double reward, const StateVec& next_state, bool terminal, const QNetwork& net,
                      double discount) {
  if (terminal) return reward;
  if (discount == 0.0) return reward;
  const auto q = net.forward(WeightSet::Target, next_state);
  return reward + discount * *std::max_element(q.begin(), q.end());
}

namespace {

// Per-sample backward pass. deltas[k] is dLoss/dz_k for layer k; pre[k] is
// the pre-activation feeding layer k+1 (k < L-1).
struct SampleTrace {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> deltas;
  double residual = 0.0;
};

SampleTrace backprop(const Weights& w, const StateVec& s, int action, double target, double scale) {
  SampleTrace t;
  const std::size_t L = w.layers.size();
  std::vector<double> out = run_tail(w, first_layer(w.layers.front(), s), &t.pre);
  if (action < 0 || static_cast<std::size_t>(action) >= out.size())
    throw std::invalid_argument("backprop: action " + std::to_string(action) + " out of range");
  t.residual = out[action] - target;
  t.deltas.resize(L);
  t.deltas[L - 1].assign(out.size(), 0.0);
  t.deltas[L - 1][action] = scale * t.residual;
  for (std::size_t k = L - 1; k >= 1; --k) {
    const DenseLayer& layer = w.layers[k];
    const auto& dnext = t.deltas[k];
    const auto& z = t.pre[k - 1];
    std::vector<double> d(layer.in, 0.0);
    for (std::size_t i = 0; i < layer.in; ++i) {
      if (z[i] <= 0.0) continue;
      const double* row = layer.weights.data() + i * layer.out;
      double acc = 0.0;
      for (std::size_t j = 0; j < layer.out; ++j) acc += row[j] * dnext[j];
      d[i] = acc;
    }
    t.deltas[k - 1] = std::move(d);
  }
  return t;
}

bool all_finite(const SampleTrace& t) {
  if (!std::isfinite(t.residual)) return false;
  for (const auto& d : t.deltas)
    for (double x : d)
      if (!std::isfinite(x)) return false;
  return true;
}

// Visits (layer k, input i, activation a) for every non-zero input feeding
// layer k in this sample.
template <typename F>
void for_each_input(const SampleTrace& t, const StateVec& s, std::size_t n_layers, F&& f) {
  s.for_each([&](std::uint32_t i, double x) { f(std::size_t{0}, static_cast<std::size_t>(i), x); });
  for (std::size_t k = 1; k < n_layers; ++k) {
    const auto& z = t.pre[k - 1];
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (z[i] > 0.0) f(k, i, z[i]);
    }
  }
}

std::vector<SampleTrace> trace_batch(const QNetwork& net, std::span<const Transition> batch,
                                     std::span<const double> targets, double& loss) {
  if (batch.empty()) throw std::invalid_argument("batch must be non-empty");
  if (targets.size() != batch.size()) throw std::invalid_argument("one target per transition required");
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<SampleTrace> traces;
  traces.reserve(batch.size());
  loss = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].state.dim() != net.input_dim()) throw std::invalid_argument("transition state has wrong dimension");
    traces.push_back(backprop(net.prediction(), batch[b].state, batch[b].action, targets[b], scale));
    loss += 0.5 * traces.back().residual * traces.back().residual;
  }
  loss *= scale;
  return traces;
}

}  // namespace

Gradient compute_gradient(const QNetwork& net, std::span<const Transition> batch, std::span<const double> targets) {
  Gradient g;
  auto traces = trace_batch(net, batch, targets, g.loss);
  const Weights& w = net.prediction();
  g.grad = w;
  for (auto& layer : g.grad.layers) {
    std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& t = traces[b];
    for_each_input(t, batch[b].state, w.layers.size(), [&](std::size_t k, std::size_t i, double a) {
      DenseLayer& gl = g.grad.layers[k];
      for (std::size_t j = 0; j < gl.out; ++j) gl.w(i, j) += a * t.deltas[k][j];
    });
    if (net.uses_bias()) {
      for (std::size_t k = 0; k < w.layers.size(); ++k)
        for (std::size_t j = 0; j < g.grad.layers[k].out; ++j) g.grad.layers[k].bias[j] += t.deltas[k][j];
    }
  }
  return g;
}

SgdStepResult sgd_step(QNetwork& net, std::span<const Transition> batch, const TrainConfig& config) {
  std::vector<double> targets;
  targets.reserve(batch.size());
  for (const auto& tr : batch)
    targets.push_back(bellman_target(tr.reward, tr.next_state, tr.terminal, net, config.discount));

  SgdStepResult result;
  auto traces = trace_batch(net, batch, targets, result.loss);
  if (!std::isfinite(result.loss)) return result;
  for (const auto& t : traces)
    if (!all_finite(t)) return result;

  Weights& w = net.prediction();
  const double lr = config.learning_rate;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& t = traces[b];
    for_each_input(t, batch[b].state, w.layers.size(), [&](std::size_t k, std::size_t i, double a) {
      DenseLayer& layer = w.layers[k];
      const auto& d = t.deltas[k];
      double* row = layer.weights.data() + i * layer.out;
      for (std::size_t j = 0; j < layer.out; ++j) row[j] -= lr * a * d[j];
    });
    if (net.uses_bias()) {
      for (std::size_t k = 0; k < w.layers.size(); ++k)
        for (std::size_t j = 0; j < w.layers[k].out; ++j) w.layers[k].bias[j] -= lr * t.deltas[k][j];
    }
  }
  result.applied = true;
  return result;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(t));
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  n = std::min(n, items_.size());
  // partial Fisher-Yates over indices
  std::vector<std::size_t> idx(items_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<Transition> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(k),
                                                      static_cast<std::int64_t>(idx.size() - 1)));
    std::swap(idx[k], idx[j]);
    out.push_back(items_[idx[k]]);
  }
  return out;
}

nlohmann::json weights_to_json(const Weights& w) {
  nlohmann::json doc;
  doc["format"] = "qroute-weights-v1";
  auto& layers = doc["layers"] = nlohmann::json::array();
  for (const auto& l : w.layers)
    layers.push_back({{"in", l.in}, {"out", l.out}, {"weights", l.weights}, {"bias", l.bias}});
  return doc;
}

Weights weights_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("format", "") != "qroute-weights-v1")
    throw std::runtime_error("weights: missing or unknown format header");
  Weights w;
  const auto& layers = doc.at("layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& jl = layers[k];
    DenseLayer l;
    l.in = jl.at("in").get<std::size_t>();
    l.out = jl.at("out").get<std::size_t>();
    l.weights = jl.at("weights").get<std::vector<double>>();
    l.bias = jl.at("bias").get<std::vector<double>>();
    if (l.weights.size() != l.in * l.out || l.bias.size() != l.out)
      throw std::runtime_error("weights: layer " + std::to_string(k) + " shape header does not match data");
    w.layers.push_back(std::move(l));
  }
  return w;
}

void save_weights(const Weights& w, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << weights_to_json(w).dump() << "\n";
}

Weights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return weights_from_json(nlohmann::json::parse(in));
}

}  // namespace qroute
