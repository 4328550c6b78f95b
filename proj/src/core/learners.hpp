#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tabular.hpp"

namespace kgfe {

enum class LearnerKind { decision_tree, ridge, logistic };

const char *to_string(LearnerKind k);
std::optional<LearnerKind> parse_learner(std::string_view s);

struct Learner {
  LearnerKind kind = LearnerKind::ridge;
  int max_depth = 6;
  size_t min_leaf = 5;
  double ridge_alpha = 1.0;
  double logistic_l2 = 1.0;
  size_t logistic_steps = 200;
};

// Ridge for regression, logistic regression for classification.
Learner default_learner(Task task);

// Per-column standardization fitted on training rows; constant columns map to 0.
struct Standardizer {
  Eigen::VectorXd mean, scale;
  static Standardizer fit(const Eigen::MatrixXd &X);
  Eigen::MatrixXd apply(const Eigen::MatrixXd &X) const;
};

class DecisionTree {
public:
  void fit(const Eigen::MatrixXd &X, std::span<const double> y, bool classification,
           int n_classes, int max_depth, size_t min_leaf);
  Eigen::VectorXd predict(const Eigen::MatrixXd &X) const;
  size_t node_count() const { return nodes_.size(); }

private:
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0;
  };
  int build(std::vector<std::vector<int>> sorted, int depth);
  double leaf_value(const std::vector<int> &rows) const;

  const Eigen::MatrixXd *X_ = nullptr;
  std::vector<double> y_;
  bool classification_ = false;
  int n_classes_ = 0;
  int max_depth_ = 0;
  size_t min_leaf_ = 1;
  std::vector<Node> nodes_;
};

class RidgeRegression {
public:
  void fit(const Eigen::MatrixXd &X, std::span<const double> y, double alpha);
  Eigen::VectorXd predict(const Eigen::MatrixXd &X) const;

private:
  Standardizer std_;
  Eigen::VectorXd beta_;
  double intercept_ = 0.0;
};

// Multinomial logistic regression trained by full-batch gradient descent.
// Parameters are flattened as [W (classes x d, row-major), b (classes)].
class LogisticRegression {
public:
  void fit(const Eigen::MatrixXd &X, std::span<const int> y, int n_classes, double l2, size_t steps);
  Eigen::VectorXd predict(const Eigen::MatrixXd &X) const; // class indices

  // Mean cross-entropy + l2/(2n) * |W|^2 and its analytic gradient.
  static std::pair<double, Eigen::VectorXd> loss_and_gradient(const Eigen::MatrixXd &Z,
                                                              std::span<const int> y, int n_classes,
                                                              const Eigen::VectorXd &params,
                                                              double l2);

private:
  Standardizer std_;
  Eigen::VectorXd params_;
  int n_classes_ = 0;
};

} // namespace kgfe
