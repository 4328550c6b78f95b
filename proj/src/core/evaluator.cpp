#include "evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "error.hpp"

namespace kgfe {

double one_minus_rae(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size() || y.empty())
    throw Error(ErrorCode::invalid_argument, "1-rae needs equal nonempty target/prediction lengths");
  double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double num = 0, den = 0;
  for (size_t i = 0; i < y.size(); ++i) {
    num += std::abs(yhat[i] - y[i]);
    den += std::abs(mean - y[i]);
  }
  if (den == 0) throw Error(ErrorCode::degenerate_metric, "1-rae undefined for a constant target");
  return 1.0 - num / den;
}

double f1(std::span<const int> y, std::span<const int> yhat, Averaging averaging) {
  if (y.size() != yhat.size() || y.empty())
    throw Error(ErrorCode::invalid_argument, "f1 needs equal nonempty label lengths");
  int classes = 0;
  for (size_t i = 0; i < y.size(); ++i) classes = std::max({classes, y[i] + 1, yhat[i] + 1});
  if (averaging == Averaging::binary && classes > 2)
    throw Error(ErrorCode::invalid_argument, "binary f1 needs at most 2 classes");
  auto class_f1 = [&](int c) {
    double tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < y.size(); ++i) {
      bool t = y[i] == c, p = yhat[i] == c;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    if (tp == 0) return 0.0;
    double precision = tp / (tp + fp), recall = tp / (tp + fn);
    return 2 * precision * recall / (precision + recall);
  };
  if (averaging == Averaging::binary) return class_f1(1);
  double s = 0;
  for (int c = 0; c < classes; ++c) s += class_f1(c);
  return s / classes;
}

TargetData encode_target(const Dataset &d) {
  TargetData t;
  if (d.task() == Task::regression) {
    t.values = d.target().values;
    return t;
  }
  auto labels = target_labels(d);
  std::set<std::string> distinct(labels.begin(), labels.end());
  t.class_labels.assign(distinct.begin(), distinct.end());
  std::map<std::string, int> index;
  for (size_t i = 0; i < t.class_labels.size(); ++i) index[t.class_labels[i]] = static_cast<int>(i);
  for (auto &l : labels) t.classes.push_back(index[l]);
  t.values.assign(t.classes.begin(), t.classes.end());
  return t;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2) return hi;
  double lo = *std::max_element(v.begin(), v.begin() + static_cast<long>(mid));
  return lo + (hi - lo) / 2;
}

std::vector<double> numeric_view(const Column &c, std::span<const size_t> rows) {
  std::vector<double> present;
  for (size_t r : rows)
    if (c.has(r)) present.push_back(c.values[r]);
  double fill = median(present);
  std::vector<double> out;
  out.reserve(rows.size());
  for (size_t r : rows) out.push_back(c.has(r) ? c.values[r] : fill);
  return out;
}

double pearson_abs(std::span<const double> x, std::span<const double> y) {
  size_t n = x.size();
  if (n < 2) return 0.0;
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) return 0.0;
  double r = std::abs(sxy / std::sqrt(sxx * syy));
  return std::isfinite(r) ? std::min(r, 1.0) : 0.0;
}

// Discretized codes: categories as-is, numeric values in up to 10 quantile bins.
std::vector<int> discretize(const Column &c, std::span<const size_t> rows) {
  std::vector<int> codes(rows.size(), 0);
  if (c.dtype == DType::categorical) {
    std::map<std::string, int> ids;
    for (size_t i = 0; i < rows.size(); ++i) {
      if (!c.has(rows[i])) continue;
      auto [it, _] = ids.try_emplace(c.labels[rows[i]], static_cast<int>(ids.size()) + 1);
      codes[i] = it->second;
    }
    return codes;
  }
  auto x = numeric_view(c, rows);
  std::vector<double> sorted = x;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> edges;
  for (int b = 1; b < 10; ++b) edges.push_back(sorted[sorted.size() * static_cast<size_t>(b) / 10]);
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  for (size_t i = 0; i < x.size(); ++i)
    codes[i] = static_cast<int>(std::upper_bound(edges.begin(), edges.end(), x[i]) - edges.begin());
  return codes;
}

double mutual_information(const std::vector<int> &a, std::span<const int> b) {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> pa, pb;
  double n = static_cast<double>(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    pa[a[i]] += 1;
    pb[b[i]] += 1;
  }
  double mi = 0;
  for (auto &[key, c] : joint) mi += c / n * std::log(c * n / (pa[key.first] * pb[key.second]));
  return std::max(mi, 0.0);
}

} // namespace

double relevance(const Column &c, const TargetData &t, Task task, std::span<const size_t> rows) {
  if (task == Task::classification) {
    std::vector<int> y;
    for (size_t r : rows) y.push_back(t.classes[r]);
    return mutual_information(discretize(c, rows), y);
  }
  std::vector<double> y;
  for (size_t r : rows) y.push_back(t.values[r]);
  if (c.dtype == DType::categorical) {
    // Best single-category indicator correlation.
    std::set<std::string> cats;
    for (size_t r : rows)
      if (c.has(r)) cats.insert(c.labels[r]);
    double best = 0;
    for (auto &cat : cats) {
      std::vector<double> x;
      for (size_t r : rows) x.push_back(c.has(r) && c.labels[r] == cat ? 1.0 : 0.0);
      best = std::max(best, pearson_abs(x, y));
    }
    return best;
  }
  return pearson_abs(numeric_view(c, rows), y);
}

FeatureEncoder FeatureEncoder::fit(const Dataset &d, std::span<const size_t> train_rows,
                                   size_t max_features) {
  auto feats = d.features();
  std::sort(feats.begin(), feats.end(), [](auto *a, auto *b) { return a->name < b->name; });
  if (feats.size() > max_features) {
    TargetData t = encode_target(d);
    std::vector<std::pair<double, const Column *>> scored;
    for (auto *f : feats) scored.emplace_back(relevance(*f, t, d.task(), train_rows), f);
    std::stable_sort(scored.begin(), scored.end(),
                     [](auto &a, auto &b) { return a.first > b.first; });
    scored.resize(max_features);
    feats.clear();
    for (auto &s : scored) feats.push_back(s.second);
    std::sort(feats.begin(), feats.end(), [](auto *a, auto *b) { return a->name < b->name; });
  }

  FeatureEncoder enc;
  for (auto *f : feats) {
    Block b;
    b.feature = f->name;
    b.start = enc.width_;
    if (f->dtype == DType::categorical) {
      b.categorical = true;
      std::map<std::string, size_t> counts;
      for (size_t r : train_rows)
        if (f->has(r)) ++counts[f->labels[r]];
      std::vector<std::pair<std::string, size_t>> cats(counts.begin(), counts.end());
      std::stable_sort(cats.begin(), cats.end(), [](auto &a, auto &b) { return a.second > b.second; });
      if (!cats.empty()) b.mode = cats.front().first;
      if (cats.size() > kMaxEncodedCategories) cats.resize(kMaxEncodedCategories);
      for (auto &c : cats) b.categories.push_back(c.first);
      b.width = static_cast<Eigen::Index>(b.categories.size());
    } else {
      std::vector<double> present;
      for (size_t r : train_rows)
        if (f->has(r)) present.push_back(f->values[r]);
      b.fill = median(std::move(present));
      b.width = 1;
    }
    enc.width_ += b.width;
    enc.blocks_.push_back(std::move(b));
  }
  return enc;
}

Eigen::MatrixXd FeatureEncoder::transform(const Dataset &d, std::span<const size_t> rows) const {
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), width_);
  for (auto &b : blocks_) {
    const Column *c = d.find(b.feature);
    if (!c) throw Error(ErrorCode::invalid_argument, "encoder: feature '" + b.feature + "' missing");
    for (size_t i = 0; i < rows.size(); ++i) {
      size_t r = rows[i];
      auto row = static_cast<Eigen::Index>(i);
      if (!b.categorical) {
        X(row, b.start) = c->has(r) ? c->values[r] : b.fill;
        continue;
      }
      const std::string &label = c->has(r) ? c->labels[r] : b.mode;
      for (Eigen::Index k = 0; k < b.width; ++k)
        if (b.categories[static_cast<size_t>(k)] == label) X(row, b.start + k) = 1.0;
    }
  }
  return X;
}

const char *task_metric_name(Task task, size_t n_classes) {
  if (task == Task::regression) return "1-rae";
  return n_classes <= 2 ? "f1_binary" : "f1_macro";
}

double task_metric(Task task, const TargetData &t, std::span<const size_t> rows,
                   const Eigen::VectorXd &yhat) {
  if (task == Task::regression) {
    std::vector<double> y, p;
    for (size_t i = 0; i < rows.size(); ++i) {
      y.push_back(t.values[rows[i]]);
      p.push_back(yhat(static_cast<Eigen::Index>(i)));
    }
    return one_minus_rae(y, p);
  }
  std::vector<int> y, p;
  for (size_t i = 0; i < rows.size(); ++i) {
    y.push_back(t.classes[rows[i]]);
    p.push_back(static_cast<int>(yhat(static_cast<Eigen::Index>(i))));
  }
  return f1(y, p, t.class_labels.size() <= 2 ? Averaging::binary : Averaging::macro);
}

namespace {

struct FittedFold {
  FeatureEncoder encoder;
  Eigen::MatrixXd X_test;
  std::vector<size_t> test;
  DecisionTree tree;
  RidgeRegression ridge;
  LogisticRegression logistic;
  LearnerKind kind;

  Eigen::VectorXd predict(const Eigen::MatrixXd &X) const {
    switch (kind) {
    case LearnerKind::decision_tree: return tree.predict(X);
    case LearnerKind::ridge: return ridge.predict(X);
    case LearnerKind::logistic: return logistic.predict(X);
    }
    return {};
  }
};

// Empty optional when the fold is degenerate.
std::optional<FittedFold> fit_fold(const Dataset &d, const TargetData &t, const FoldPlan &folds,
                                   size_t fold, const Learner &learner) {
  auto train = folds.train_rows(fold);
  auto test = folds.test_rows(fold);
  if (train.empty() || test.empty()) return std::nullopt;
  bool classification = d.task() == Task::classification;
  LearnerKind kind = learner.kind;
  if (classification && kind == LearnerKind::ridge)
    throw Error(ErrorCode::config_invalid, "ridge regression cannot fit a classification task");
  if (!classification && kind == LearnerKind::logistic)
    throw Error(ErrorCode::config_invalid, "logistic regression cannot fit a regression task");
  if (classification) {
    std::set<int> seen;
    for (size_t r : train) seen.insert(t.classes[r]);
    if (seen.size() < 2) return std::nullopt;
  } else {
    double first = t.values[test.front()];
    if (std::all_of(test.begin(), test.end(), [&](size_t r) { return t.values[r] == first; }))
      return std::nullopt;
  }
  FittedFold ff;
  ff.kind = kind;
  ff.encoder = FeatureEncoder::fit(d, train);
  Eigen::MatrixXd X = ff.encoder.transform(d, train);
  ff.X_test = ff.encoder.transform(d, test);
  ff.test = std::move(test);
  int n_classes = static_cast<int>(t.class_labels.size());
  std::vector<double> y;
  std::vector<int> yc;
  for (size_t r : train) {
    y.push_back(t.values[r]);
    if (classification) yc.push_back(t.classes[r]);
  }
  switch (kind) {
  case LearnerKind::decision_tree:
    ff.tree.fit(X, y, classification, n_classes, learner.max_depth, learner.min_leaf);
    break;
  case LearnerKind::ridge: ff.ridge.fit(X, y, learner.ridge_alpha); break;
  case LearnerKind::logistic:
    ff.logistic.fit(X, yc, n_classes, learner.logistic_l2, learner.logistic_steps);
    break;
  }
  return ff;
}

} // namespace

EvalResult cross_val(const Dataset &d, const FoldPlan &folds, const Learner &learner) {
  if (folds.assignments.size() != d.n_rows())
    throw Error(ErrorCode::invalid_argument, "fold plan does not match dataset rows");
  TargetData t = encode_target(d);
  EvalResult res;
  res.metric = task_metric_name(d.task(), t.class_labels.size());
  for (size_t f = 0; f < folds.k; ++f) {
    auto ff = fit_fold(d, t, folds, f, learner);
    if (!ff) {
      res.skipped_folds.push_back(f);
      continue;
    }
    res.per_fold.push_back(task_metric(d.task(), t, ff->test, ff->predict(ff->X_test)));
    res.n_features = ff->encoder.blocks().size();
  }
  if (res.per_fold.empty())
    throw Error(ErrorCode::all_folds_degenerate, "every cross-validation fold is degenerate");
  res.mean = std::accumulate(res.per_fold.begin(), res.per_fold.end(), 0.0) /
             static_cast<double>(res.per_fold.size());
  return res;
}

std::vector<Importance> permutation_importance(const Dataset &d, const Learner &learner,
                                               const FoldPlan &folds, size_t repeats,
                                               uint64_t seed) {
  TargetData t = encode_target(d);
  std::map<std::string, double> total;
  for (auto &name : d.feature_names()) total[name] = 0.0;
  size_t rounds = 0;
  std::mt19937_64 rng(seed);
  for (size_t f = 0; f < folds.k; ++f) {
    auto ff = fit_fold(d, t, folds, f, learner);
    if (!ff) continue;
    double base = task_metric(d.task(), t, ff->test, ff->predict(ff->X_test));
    for (auto &b : ff->encoder.blocks()) {
      for (size_t r = 0; r < repeats; ++r) {
        std::vector<Eigen::Index> perm(ff->test.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Eigen::MatrixXd Xp = ff->X_test;
        for (size_t i = 0; i < perm.size(); ++i)
          Xp.block(static_cast<Eigen::Index>(i), b.start, 1, b.width) =
              ff->X_test.block(perm[i], b.start, 1, b.width);
        total[b.feature] += base - task_metric(d.task(), t, ff->test, ff->predict(Xp));
      }
    }
    ++rounds;
  }
  std::vector<Importance> out;
  double denom = static_cast<double>(std::max<size_t>(rounds * repeats, 1));
  for (auto &[name, v] : total) out.push_back({name, v / denom});
  std::stable_sort(out.begin(), out.end(),
                   [](auto &a, auto &b) { return a.importance > b.importance; });
  return out;
}

} // namespace kgfe
