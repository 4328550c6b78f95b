#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "decomp.hpp"
#include "kg_store.hpp"
#include "tabular.hpp"

namespace kgfe {

struct AgentParams {
  int hidden1 = 64;
  int hidden2 = 64;
  double lr = 1e-3;
  size_t batch = 32;
  double gamma = 0.9;
  size_t sync_period = 50;
  size_t replay_capacity = 2000;
  double eps0 = 1.0;
  double eps_min = 0.05;
  double eps_decay = 0.97;
};

// Fully connected network with rectifier hidden layers and a linear output.
class QNetwork {
public:
  QNetwork() = default;
  // dims = {input, hidden..., output}; Glorot-uniform weights, zero biases.
  QNetwork(std::vector<int> dims, uint64_t seed);

  const std::vector<int> &dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }

  Eigen::VectorXd forward(const Eigen::VectorXd &s) const;
  // One column per state.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd &S) const;

  // mean_i (y_i - Q(s_i, a_i))^2 and its gradient over the flat parameters.
  std::pair<double, Eigen::VectorXd> loss_and_gradient(const Eigen::MatrixXd &S,
                                                       std::span<const size_t> actions,
                                                       std::span<const double> targets) const;

  // Layer by layer: W (row-major), then b.
  Eigen::VectorXd params() const;
  void set_params(const Eigen::VectorXd &p);
  Eigen::Index param_count() const;
  bool finite() const;

  std::string serialize() const;
  static QNetwork deserialize(std::string_view bytes);
  void save(const std::string &path) const;
  static QNetwork load(const std::string &path);

  bool operator==(const QNetwork &) const = default;

private:
  std::vector<int> dims_;
  std::vector<Eigen::MatrixXd> W_;
  std::vector<Eigen::VectorXd> b_;
};

inline constexpr uint32_t kCheckpointVersion = 1;

class Adam {
public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(Eigen::VectorXd &params, const Eigen::VectorXd &grad);
  double lr() const { return lr_; }

private:
  double lr_, beta1_, beta2_, eps_;
  Eigen::VectorXd m_, v_;
  uint64_t t_ = 0;
};

struct Transition {
  Eigen::VectorXd s;
  size_t a = 0;
  double r = 0.0;
  Eigen::VectorXd s2;
  bool terminal = false;
  std::vector<uint8_t> next_mask; // valid actions at s2; empty means all
};

class ReplayBuffer {
public:
  ReplayBuffer(size_t capacity, uint64_t seed);
  void push(Transition t);
  size_t size() const { return ring_.size(); }
  size_t capacity() const { return capacity_; }
  // i-th oldest stored transition.
  const Transition &at(size_t i) const;
  // Uniform with replacement.
  std::vector<const Transition *> sample(size_t n);

private:
  size_t capacity_;
  std::vector<Transition> ring_;
  size_t head_ = 0; // oldest slot once full
  std::mt19937_64 rng_;
};

struct EpsilonSchedule {
  double eps0 = 1.0, eps_min = 0.05, decay = 0.97;
  double at(size_t episode) const;
};

// Lowest-index argmax of q over valid actions; throws on an empty mask.
size_t greedy_action(const Eigen::VectorXd &q, std::span<const uint8_t> mask);

size_t select_action(const QNetwork &q, const Eigen::VectorXd &s, double epsilon,
                     std::span<const uint8_t> mask, std::mt19937_64 &rng);

// One gradient step on `q` toward r + gamma * max_a' target(s', a').
// Returns the loss before the step.
double td_update(QNetwork &q, const QNetwork &target, std::span<const Transition *const> batch,
                 double gamma, Adam &opt);

void sync_target(const QNetwork &q, QNetwork &target);

struct StepContext {
  size_t step = 0;
  size_t m = 1;
  double last_reward = 0.0;
  double mean_interpretability = 0.0;
};

// Concept vocabulary (KB order, Unknown last) then dimension groups then
// feature count, step/m, last reward mapped to [0,1], mean interpretability.
struct StateLayout {
  std::vector<std::string> concepts;
  std::vector<std::string> dimension_groups;
  size_t size() const { return concepts.size() + dimension_groups.size() + 4; }
};

StateLayout state_layout(const KnowledgeBase &kb);
Eigen::VectorXd vectorize(const Dataset &d, const KnowledgeBase &kb, const StateLayout &layout,
                          const StepContext &ctx);

struct LogEntry {
  size_t episode = 0;
  size_t step = 0;
  double epsilon = 0.0;
  std::optional<double> loss;
  double reward = 0.0;
};

class DqnAgent {
public:
  DqnAgent(int state_dim, int actions, const AgentParams &params, uint64_t seed);

  size_t act(const Eigen::VectorXd &s, double epsilon, std::span<const uint8_t> mask);
  // Stores the transition and trains once a batch is available.
  std::optional<double> observe(Transition t);

  const QNetwork &network() const { return q_; }
  const QNetwork &target() const { return target_; }
  const ReplayBuffer &replay() const { return replay_; }
  size_t updates() const { return updates_; }

private:
  AgentParams params_;
  QNetwork q_, target_;
  Adam opt_;
  ReplayBuffer replay_;
  std::mt19937_64 rng_;
  size_t updates_ = 0;
};

} // namespace kgfe
