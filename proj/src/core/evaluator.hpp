#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "learners.hpp"
#include "tabular.hpp"

namespace kgfe {

inline constexpr size_t kMaxModelFeatures = 200;
inline constexpr size_t kMaxEncodedCategories = 20;

struct EvalResult {
  std::string metric;
  std::vector<double> per_fold;
  double mean = 0.0;
  size_t n_features = 0;
  std::vector<size_t> skipped_folds;
};

double one_minus_rae(std::span<const double> y, std::span<const double> yhat);

enum class Averaging { binary, macro };
// Labels are class indices in [0, n_classes). Binary averaging scores class 1.
double f1(std::span<const int> y, std::span<const int> yhat, Averaging averaging);

// Numeric design matrix built from training-row statistics only. Features
// are addressed by name (sorted), so input column order never matters.
class FeatureEncoder {
public:
  static FeatureEncoder fit(const Dataset &d, std::span<const size_t> train_rows,
                            size_t max_features = kMaxModelFeatures);

  Eigen::MatrixXd transform(const Dataset &d, std::span<const size_t> rows) const;

  struct Block {
    std::string feature;
    Eigen::Index start = 0, width = 0;
    bool categorical = false;
    double fill = 0.0;                   // numeric imputation (training median)
    std::string mode;                    // categorical imputation
    std::vector<std::string> categories; // one indicator column each
  };
  const std::vector<Block> &blocks() const { return blocks_; }
  Eigen::Index width() const { return width_; }

private:
  std::vector<Block> blocks_;
  Eigen::Index width_ = 0;
};

// Targets of a dataset: values for regression, class indices (sorted labels)
// for classification.
struct TargetData {
  std::vector<double> values;
  std::vector<int> classes;
  std::vector<std::string> class_labels;
};
TargetData encode_target(const Dataset &d);

// Score of `yhat` against the held-out targets for the dataset's task.
double task_metric(Task task, const TargetData &t, std::span<const size_t> rows,
                   const Eigen::VectorXd &yhat);
const char *task_metric_name(Task task, size_t n_classes);

EvalResult cross_val(const Dataset &d, const FoldPlan &folds, const Learner &learner);

struct Importance {
  std::string feature;
  double importance;
};

// Mean held-out metric drop over `repeats` seeded permutations of each feature.
std::vector<Importance> permutation_importance(const Dataset &d, const Learner &learner,
                                               const FoldPlan &folds, size_t repeats,
                                               uint64_t seed);

// Relevance of a candidate column to the target on the given rows:
// |Pearson r| for regression, mutual information (nats) for classification.
double relevance(const Column &c, const TargetData &t, Task task, std::span<const size_t> rows);

} // namespace kgfe
