#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agent.hpp"
#include "decomp.hpp"
#include "evaluator.hpp"
#include "kg_store.hpp"
#include "learners.hpp"
#include "tabular.hpp"
#include "transforms.hpp"

namespace kgfe {

struct SearchConfig {
  double lambda = 0.7;
  size_t m = 5;
  size_t episodes = 50;
  size_t top_k = 8;
  bool drop_noninterp = false;
  size_t bootstrap_rows = 5000; // 0 disables the row cap
  uint64_t seed = 42;
  size_t k = 5;
  std::optional<Learner> learner; // default_learner(task) when unset
  AgentParams agent;
};

// Throws config_invalid naming the offending field.
void validate(const SearchConfig &cfg);
Learner resolve_learner(const SearchConfig &cfg, Task task);

// Performance of a candidate dataset. The default is the cross-validated
// metric of the configured learner.
using PerformanceFn = std::function<double(const Dataset &)>;

struct GeneratedFeature {
  std::string name;
  std::vector<std::string> operands;
  double interpretability = 0.0;
  bool non_interpretable = false;
};

struct PipelineStep {
  std::string transform;
  std::vector<GeneratedFeature> features;
};

// Components logged per environment step; reward is recomputable from them.
struct StepRecord {
  size_t episode = 0;
  size_t step = 0;
  size_t action = 0;
  std::string transform;
  double perf_before = 0.0;
  double perf_after = 0.0;
  double mean_interp_new = 0.0;
  size_t new_features = 0;
  double lambda = 0.0;
  double reward = 0.0;
  double objective = 0.0;
};

struct StepOutcome {
  double reward = 0.0;
  bool terminal = false;
  StepRecord record;
};

class Environment {
public:
  Environment(Dataset exploited, DecompositionGraph graph, const KnowledgeBase &kb,
              const SearchConfig &cfg, PerformanceFn perf = {});

  void reset();
  std::vector<uint8_t> mask() const;
  StepOutcome step(size_t action);
  Eigen::VectorXd state() const;

  const Dataset &data() const { return data_; }
  const DecompositionGraph &graph() const { return graph_; }
  const std::vector<PipelineStep> &pipeline() const { return pipeline_; }
  size_t steps_taken() const { return steps_; }
  double performance() const { return perf_; }
  // Mean interpretability of the features generated so far; 0 when none.
  double mean_generated_interpretability() const;
  // lambda * performance + (1 - lambda) * mean generated interpretability.
  double objective() const;

  const std::vector<const Transform *> &actions() const { return actions_; }
  const StateLayout &layout() const { return layout_; }
  // Performance of a dataset through the job-wide cache.
  double evaluate(const Dataset &d);
  void set_episode(size_t e) { episode_ = e; }

private:
  const KnowledgeBase &kb_;
  SearchConfig cfg_;
  std::vector<const Transform *> actions_;
  StateLayout layout_;
  PerformanceFn perf_fn_;
  std::shared_ptr<std::map<std::string, double>> cache_;
  std::vector<size_t> rank_rows_;
  TargetData target_;

  Dataset base_data_;
  DecompositionGraph base_graph_;
  double base_perf_ = 0.0;

  Dataset data_;
  DecompositionGraph graph_;
  std::vector<PipelineStep> pipeline_;
  std::vector<NodeId> generated_;
  size_t steps_ = 0;
  size_t episode_ = 0;
  double perf_ = 0.0;
  double last_reward_ = 0.0;
};

struct PipelineResult {
  std::vector<PipelineStep> best_pipeline;
  Dataset best_dataset;
  DecompositionGraph best_graph;
  std::vector<double> perf_trace;   // performance after each step of the best path, step 0 first
  std::vector<double> interp_trace; // mean generated interpretability along the same path
  double objective = 0.0;
  double performance = 0.0;
  double mean_interpretability = 0.0;
  size_t best_episode = 0;
  std::vector<StepRecord> ledger;
  std::vector<LogEntry> log;
  std::optional<QNetwork> network;
};

PipelineResult train(const Dataset &exploited, const DecompositionGraph &graph,
                     const KnowledgeBase &kb, const SearchConfig &cfg, PerformanceFn perf = {});

PipelineResult random_baseline(const Dataset &exploited, const DecompositionGraph &graph,
                               const KnowledgeBase &kb, const SearchConfig &cfg,
                               PerformanceFn perf = {});

// Count of (transform, ordered operand tuple) candidates over p features,
// grouped by operand count: sum_i A(p, i) * transforms_with_i_operands.
struct SpaceSize {
  std::optional<uint64_t> value; // absent when the count exceeds 64 bits
  std::string decimal;
};
SpaceSize search_space_size(uint64_t p, const std::map<size_t, uint64_t> &transforms_by_operands);
SpaceSize search_space_size(uint64_t p, std::span<const Transform *const> transforms);

inline constexpr double kOracleBudget = 1e5;

// Evaluates every action sequence of length <= depth (at most 2) and returns
// the best objective found.
PipelineResult exhaustive_oracle(const Dataset &exploited, const DecompositionGraph &graph,
                                 const KnowledgeBase &kb, size_t depth, const SearchConfig &cfg,
                                 PerformanceFn perf = {});

} // namespace kgfe
