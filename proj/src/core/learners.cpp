#include "learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "error.hpp"

namespace kgfe {

const char *to_string(LearnerKind k) {
  switch (k) {
  case LearnerKind::decision_tree: return "decision_tree";
  case LearnerKind::ridge: return "linear_regression_ridge";
  case LearnerKind::logistic: return "logistic_regression";
  }
  return "linear_regression_ridge";
}

std::optional<LearnerKind> parse_learner(std::string_view s) {
  if (s == "decision_tree" || s == "tree") return LearnerKind::decision_tree;
  if (s == "linear_regression_ridge" || s == "ridge") return LearnerKind::ridge;
  if (s == "logistic_regression" || s == "logistic") return LearnerKind::logistic;
  return std::nullopt;
}

Learner default_learner(Task task) {
  Learner l;
  l.kind = task == Task::regression ? LearnerKind::ridge : LearnerKind::logistic;
  return l;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd &X) {
  Standardizer s;
  Eigen::Index n = X.rows();
  s.mean = X.colwise().mean().transpose();
  s.scale.resize(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    double var = (X.col(j).array() - s.mean(j)).square().sum() / static_cast<double>(std::max<Eigen::Index>(n, 1));
    double sd = std::sqrt(var);
    s.scale(j) = sd > 1e-12 * std::max(1.0, std::abs(s.mean(j))) ? 1.0 / sd : 0.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd &X) const {
  Eigen::MatrixXd Z = X;
  for (Eigen::Index j = 0; j < Z.cols(); ++j)
    Z.col(j) = (Z.col(j).array() - mean(j)) * scale(j);
  return Z;
}

// ---------------------------------------------------------------- tree

void DecisionTree::fit(const Eigen::MatrixXd &X, std::span<const double> y, bool classification,
                       int n_classes, int max_depth, size_t min_leaf) {
  X_ = &X;
  y_.assign(y.begin(), y.end());
  classification_ = classification;
  n_classes_ = n_classes;
  max_depth_ = max_depth;
  min_leaf_ = std::max<size_t>(min_leaf, 1);
  nodes_.clear();
  std::vector<std::vector<int>> sorted(static_cast<size_t>(X.cols()));
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    auto &idx = sorted[static_cast<size_t>(f)];
    idx.resize(static_cast<size_t>(X.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return X(a, f) < X(b, f); });
  }
  if (X.cols() == 0) {
    std::vector<int> all(static_cast<size_t>(X.rows()));
    std::iota(all.begin(), all.end(), 0);
    nodes_.push_back(Node{-1, 0, -1, -1, leaf_value(all)});
  } else {
    build(std::move(sorted), 0);
  }
  X_ = nullptr;
}

double DecisionTree::leaf_value(const std::vector<int> &rows) const {
  if (rows.empty()) return 0.0;
  if (!classification_) {
    double s = 0;
    for (int r : rows) s += y_[static_cast<size_t>(r)];
    return s / static_cast<double>(rows.size());
  }
  std::vector<size_t> counts(static_cast<size_t>(n_classes_), 0);
  for (int r : rows) ++counts[static_cast<size_t>(y_[static_cast<size_t>(r)])];
  return static_cast<double>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

int DecisionTree::build(std::vector<std::vector<int>> sorted, int depth) {
  const Eigen::MatrixXd &X = *X_;
  const std::vector<int> &rows = sorted.front();
  size_t n = rows.size();
  int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{-1, 0, -1, -1, leaf_value(rows)});
  if (depth >= max_depth_ || n < 2 * min_leaf_) return id;

  // Impurity as a sum over rows: SSE for regression, n * Gini for classes.
  auto impurity_total = [&](double sum, double sumsq, const std::vector<double> &cnt, size_t m) {
    if (m == 0) return 0.0;
    double dm = static_cast<double>(m);
    if (!classification_) return sumsq - sum * sum / dm;
    double g = 1.0;
    for (double c : cnt) g -= (c / dm) * (c / dm);
    return g * dm;
  };
  double tot_sum = 0, tot_sq = 0;
  std::vector<double> tot_cnt(static_cast<size_t>(std::max(n_classes_, 0)), 0.0);
  for (int r : rows) {
    double v = y_[static_cast<size_t>(r)];
    tot_sum += v;
    tot_sq += v * v;
    if (classification_) tot_cnt[static_cast<size_t>(v)] += 1;
  }
  double parent = impurity_total(tot_sum, tot_sq, tot_cnt, n);

  double best_gain = 1e-12 * std::max(1.0, parent);
  int best_f = -1;
  double best_thr = 0;
  for (size_t f = 0; f < sorted.size(); ++f) {
    const auto &order = sorted[f];
    double ls = 0, lsq = 0;
    std::vector<double> lcnt(tot_cnt.size(), 0.0);
    for (size_t i = 0; i + 1 < n; ++i) {
      double v = y_[static_cast<size_t>(order[i])];
      ls += v;
      lsq += v * v;
      if (classification_) lcnt[static_cast<size_t>(v)] += 1;
      size_t nl = i + 1, nr = n - nl;
      if (nl < min_leaf_ || nr < min_leaf_) continue;
      double xa = X(order[i], static_cast<Eigen::Index>(f));
      double xb = X(order[i + 1], static_cast<Eigen::Index>(f));
      if (!(xa < xb)) continue;
      std::vector<double> rcnt(tot_cnt.size());
      for (size_t c = 0; c < rcnt.size(); ++c) rcnt[c] = tot_cnt[c] - lcnt[c];
      double child = impurity_total(ls, lsq, lcnt, nl) +
                     impurity_total(tot_sum - ls, tot_sq - lsq, rcnt, nr);
      double gain = parent - child;
      if (gain > best_gain) {
        best_gain = gain;
        best_f = static_cast<int>(f);
        best_thr = xa + (xb - xa) / 2;
      }
    }
  }
  if (best_f < 0) return id;

  std::vector<uint8_t> goes_left(static_cast<size_t>(X.rows()), 0);
  for (int r : rows) goes_left[static_cast<size_t>(r)] = X(r, best_f) <= best_thr;
  std::vector<std::vector<int>> left(sorted.size()), right(sorted.size());
  for (size_t f = 0; f < sorted.size(); ++f)
    for (int r : sorted[f]) (goes_left[static_cast<size_t>(r)] ? left[f] : right[f]).push_back(r);
  sorted.clear();
  sorted.shrink_to_fit();

  int l = build(std::move(left), depth + 1);
  int r = build(std::move(right), depth + 1);
  nodes_[static_cast<size_t>(id)].feature = best_f;
  nodes_[static_cast<size_t>(id)].threshold = best_thr;
  nodes_[static_cast<size_t>(id)].left = l;
  nodes_[static_cast<size_t>(id)].right = r;
  return id;
}

Eigen::VectorXd DecisionTree::predict(const Eigen::MatrixXd &X) const {
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    int n = 0;
    while (nodes_[static_cast<size_t>(n)].feature >= 0) {
      const Node &nd = nodes_[static_cast<size_t>(n)];
      n = X(i, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    out(i) = nodes_[static_cast<size_t>(n)].value;
  }
  return out;
}

// ---------------------------------------------------------------- ridge

void RidgeRegression::fit(const Eigen::MatrixXd &X, std::span<const double> y, double alpha) {
  std_ = Standardizer::fit(X);
  Eigen::MatrixXd Z = std_.apply(X);
  Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  intercept_ = yv.mean();
  Eigen::MatrixXd A = Z.transpose() * Z;
  A.diagonal().array() += alpha;
  beta_ = A.ldlt().solve(Z.transpose() * (yv.array() - intercept_).matrix());
}

Eigen::VectorXd RidgeRegression::predict(const Eigen::MatrixXd &X) const {
  return (std_.apply(X) * beta_).array() + intercept_;
}

// ---------------------------------------------------------------- logistic

std::pair<double, Eigen::VectorXd> LogisticRegression::loss_and_gradient(
    const Eigen::MatrixXd &Z, std::span<const int> y, int n_classes, const Eigen::VectorXd &params,
    double l2) {
  const Eigen::Index n = Z.rows(), d = Z.cols(), C = n_classes;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(
      params.data(), C, d);
  Eigen::Map<const Eigen::VectorXd> b(params.data() + C * d, C);
  Eigen::MatrixXd logits = Z * W.transpose();
  logits.rowwise() += b.transpose();
  double loss = 0;
  Eigen::MatrixXd P(n, C);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
    double s = e.sum();
    P.row(i) = e / s;
    loss -= logits(i, y[static_cast<size_t>(i)]) - mx - std::log(s);
  }
  double dn = static_cast<double>(n);
  loss = loss / dn + l2 / (2 * dn) * W.squaredNorm();
  for (Eigen::Index i = 0; i < n; ++i) P(i, y[static_cast<size_t>(i)]) -= 1.0;
  Eigen::VectorXd grad(params.size());
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gW(grad.data(), C, d);
  gW = P.transpose() * Z / dn + (l2 / dn) * W;
  grad.tail(C) = P.colwise().sum().transpose() / dn;
  return {loss, grad};
}

void LogisticRegression::fit(const Eigen::MatrixXd &X, std::span<const int> y, int n_classes,
                             double l2, size_t steps) {
  n_classes_ = n_classes;
  std_ = Standardizer::fit(X);
  Eigen::MatrixXd Z = std_.apply(X);
  params_ = Eigen::VectorXd::Zero(n_classes * Z.cols() + n_classes);
  auto [loss, grad] = loss_and_gradient(Z, y, n_classes, params_, l2);
  double lr = 1.0;
  for (size_t s = 0; s < steps; ++s) {
    // Halve the step until the loss does not increase.
    for (int tries = 0; tries < 30; ++tries) {
      Eigen::VectorXd next = params_ - lr * grad;
      auto [nl, ng] = loss_and_gradient(Z, y, n_classes, next, l2);
      if (std::isfinite(nl) && nl <= loss) {
        params_ = std::move(next);
        loss = nl;
        grad = std::move(ng);
        break;
      }
      lr *= 0.5;
    }
  }
}

Eigen::VectorXd LogisticRegression::predict(const Eigen::MatrixXd &X) const {
  Eigen::MatrixXd Z = std_.apply(X);
  const Eigen::Index d = Z.cols(), C = n_classes_;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(
      params_.data(), C, d);
  Eigen::Map<const Eigen::VectorXd> b(params_.data() + C * d, C);
  Eigen::MatrixXd logits = Z * W.transpose();
  logits.rowwise() += b.transpose();
  Eigen::VectorXd out(Z.rows());
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    Eigen::Index arg = 0;
    for (Eigen::Index c = 1; c < C; ++c)
      if (logits(i, c) > logits(i, arg)) arg = c;
    out(i) = static_cast<double>(arg);
  }
  return out;
}

} // namespace kgfe
