#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qroute/rng.hpp"

namespace qroute {

/// Sparse vector fragment: strictly increasing indices with their values.
struct SparseBlock {
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  void push(std::uint32_t i, double v) {
    index.push_back(i);
    value.push_back(v);
  }
  std::size_t size() const { return index.size(); }
};

/// Input state for a Q-network: a (possibly shared) sparse block followed by
/// a small owned block. Agents that score many items against the same slot
/// snapshot share the big block and differ only in the local one-hot part.
/// All indices of `shared` must precede all indices of `local`.
class StateVec {
 public:
  StateVec() = default;
  StateVec(std::size_t dim, std::shared_ptr<const SparseBlock> shared, SparseBlock local);

  static StateVec from_dense(std::span<const double> dense);

  std::size_t dim() const { return dim_; }
  const SparseBlock* shared() const { return shared_.get(); }
  const std::shared_ptr<const SparseBlock>& shared_ptr() const { return shared_; }
  const SparseBlock& local() const { return local_; }
  std::vector<double> dense() const;

  template <typename F>
  void for_each(F&& f) const {
    if (shared_) {
      for (std::size_t k = 0; k < shared_->size(); ++k) f(shared_->index[k], shared_->value[k]);
    }
    for (std::size_t k = 0; k < local_.size(); ++k) f(local_.index[k], local_.value[k]);
  }

  friend bool operator==(const StateVec& a, const StateVec& b) { return a.dense() == b.dense(); }

 private:
  std::size_t dim_ = 0;
  std::shared_ptr<const SparseBlock> shared_;
  SparseBlock local_;
};

struct Transition {
  StateVec state;
  int action = 0;
  double reward = 0.0;
  StateVec next_state;
  bool terminal = false;
};

/// Fully connected layer. weights[i * out + j] connects input i to unit j.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  double& w(std::size_t i, std::size_t j) { return weights[i * out + j]; }
  double w(std::size_t i, std::size_t j) const { return weights[i * out + j]; }
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct Weights {
  std::vector<DenseLayer> layers;
  friend bool operator==(const Weights&, const Weights&) = default;
};

enum class WeightSet { Prediction, Target };

struct TrainConfig {
  double learning_rate = 0.1;  // beta
  double discount = 0.95;      // gamma
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::int64_t epsilon_decay_steps = 500;
  std::int64_t target_sync_period = 200;
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 10000;
  std::vector<std::size_t> hidden{128, 128};

  void validate(const std::string& prefix) const;
};

/// Linear epsilon schedule from epsilon_start to epsilon_end over
/// epsilon_decay_steps, constant afterwards.
double epsilon_at(const TrainConfig& config, std::int64_t step);

/// Feedforward Q-value approximator: rectifier hidden layers, identity
/// output, with separate prediction and target weight sets.
class QNetwork {
 public:
  /// `layer_sizes` = {input, hidden..., output}. Weights drawn uniformly in
  /// +-1/sqrt(fan_in) from `seed`; biases start at zero.
  QNetwork(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed, bool use_bias = true);
  /// Explicit weights; the target set starts as a copy.
  explicit QNetwork(Weights prediction, bool use_bias = true);

  std::size_t input_dim() const { return prediction_.layers.front().in; }
  std::size_t output_dim() const { return prediction_.layers.back().out; }
  bool uses_bias() const { return use_bias_; }

  const Weights& weights(WeightSet which) const { return which == WeightSet::Prediction ? prediction_ : target_; }
  Weights& prediction() { return prediction_; }
  const Weights& prediction() const { return prediction_; }
  const Weights& target() const { return target_; }

  std::vector<double> forward(WeightSet which, std::span<const double> state) const;
  std::vector<double> forward(WeightSet which, const StateVec& state) const;

  /// Scores many states that share one sparse block. Results are
  /// bit-identical to calling forward() on each assembled StateVec.
  std::vector<std::vector<double>> forward_shared(WeightSet which, const SparseBlock* shared,
                                                  std::span<const SparseBlock> locals) const;

  /// target := prediction (deep copy).
  void sync_target() { target_ = prediction_; }

 private:
  std::vector<double> finish_forward(const Weights& w, std::vector<double> pre_activation) const;

  Weights prediction_;
  Weights target_;
  bool use_bias_ = true;
};

/// r if terminal, otherwise r + gamma * max_a Q_target(s')[a].
double bellman_target(double reward, const StateVec& next_state, bool terminal, const QNetwork& net,
                      double discount);

/// Loss and gradient of 0.5 * mean_b (Q_pred(s_b)[a_b] - y_b)^2 with respect
/// to the prediction weights, for fixed targets y.
struct Gradient {
  double loss = 0.0;
  Weights grad;
};
Gradient compute_gradient(const QNetwork& net, std::span<const Transition> batch, std::span<const double> targets);

struct SgdStepResult {
  double loss = 0.0;     // loss before the step
  bool applied = false;  // false when a non-finite gradient aborted the step
};

/// One SGD step on the prediction weights toward Bellman targets computed
/// with the target weights. Target weights are untouched.
SgdStepResult sgd_step(QNetwork& net, std::span<const Transition> batch, const TrainConfig& config);

/// Fixed-capacity FIFO of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return items_.at(i); }

  /// Uniform sample without replacement (min(n, size()) items).
  std::vector<Transition> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

nlohmann::json weights_to_json(const Weights& w);
Weights weights_from_json(const nlohmann::json& doc);
void save_weights(const Weights& w, const std::filesystem::path& path);
Weights load_weights(const std::filesystem::path& path);

}  // namespace qroute
