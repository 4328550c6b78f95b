#include "search_env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <boost/multiprecision/cpp_int.hpp>

#include "error.hpp"

namespace kgfe {

namespace {

[[noreturn]] void bad(const std::string &field, const std::string &why) {
  throw Error(ErrorCode::config_invalid, field + ": " + why);
}

bool constant_column(const Column &c) {
  std::optional<size_t> first;
  for (size_t i = 0; i < c.size(); ++i) {
    if (!c.has(i)) continue;
    if (!first) {
      first = i;
      continue;
    }
    bool same = c.dtype == DType::categorical ? c.labels[i] == c.labels[*first]
                                              : c.values[i] == c.values[*first];
    if (!same) return false;
  }
  return true;
}

std::string cache_key(const Dataset &d) {
  auto names = d.feature_names();
  std::sort(names.begin(), names.end());
  std::string key;
  for (auto &n : names) {
    key += n;
    key.push_back('\n');
  }
  return key;
}

} // namespace

void validate(const SearchConfig &cfg) {
  if (!(cfg.lambda >= 0 && cfg.lambda <= 1)) bad("lambda", "must lie in [0,1]");
  if (cfg.m == 0) bad("m", "must be at least 1");
  if (cfg.top_k == 0) bad("top_k", "must be at least 1");
  if (cfg.k < 2) bad("k", "needs at least 2 folds");
  const AgentParams &a = cfg.agent;
  if (a.hidden1 <= 0 || a.hidden2 <= 0) bad("hidden", "layer widths must be positive");
  if (!(a.lr > 0) || !std::isfinite(a.lr)) bad("lr", "must be positive");
  if (a.batch == 0) bad("batch", "must be positive");
  if (!(a.gamma >= 0 && a.gamma < 1)) bad("gamma", "must lie in [0,1)");
  if (a.sync_period == 0) bad("sync_period", "must be positive");
  if (a.replay_capacity == 0) bad("replay_capacity", "must be positive");
  if (!(a.eps_min >= 0 && a.eps_min <= a.eps0 && a.eps0 <= 1)) bad("epsilon", "need 0 <= eps_min <= eps0 <= 1");
  if (!(a.eps_decay > 0 && a.eps_decay <= 1)) bad("eps_decay", "must lie in (0,1]");
  if (cfg.learner) {
    const Learner &l = *cfg.learner;
    if (l.max_depth < 1) bad("max_depth", "must be at least 1");
    if (l.min_leaf < 1) bad("min_leaf", "must be at least 1");
    if (!(l.ridge_alpha >= 0)) bad("ridge_alpha", "must be nonnegative");
    if (!(l.logistic_l2 >= 0)) bad("logistic_l2", "must be nonnegative");
  }
}

Learner resolve_learner(const SearchConfig &cfg, Task task) {
  return cfg.learner ? *cfg.learner : default_learner(task);
}

Environment::Environment(Dataset exploited, DecompositionGraph graph, const KnowledgeBase &kb,
                         const SearchConfig &cfg, PerformanceFn perf)
    : kb_(kb), cfg_(cfg), actions_(builtin_catalog().actions()), layout_(state_layout(kb)),
      cache_(std::make_shared<std::map<std::string, double>>()),
      base_data_(std::move(exploited)), base_graph_(std::move(graph)) {
  validate(cfg_);
  target_ = encode_target(base_data_);
  size_t n = base_data_.n_rows();
  std::vector<size_t> sample;
  if (cfg_.bootstrap_rows > 0 && n > cfg_.bootstrap_rows) {
    sample.resize(n);
    std::iota(sample.begin(), sample.end(), 0);
    std::mt19937_64 rng(cfg_.seed ^ 0x5bd1e995u);
    std::shuffle(sample.begin(), sample.end(), rng);
    sample.resize(cfg_.bootstrap_rows);
    std::sort(sample.begin(), sample.end());
  }
  Dataset eval_base = sample.empty() ? base_data_ : base_data_.select_rows(sample);
  FoldPlan folds = make_folds(eval_base, cfg_.k, cfg_.seed);
  for (size_t r : folds.train_rows(0)) rank_rows_.push_back(sample.empty() ? r : sample[r]);
  if (perf) {
    perf_fn_ = std::move(perf);
  } else {
    Learner learner = resolve_learner(cfg_, base_data_.task());
    perf_fn_ = [sample, folds, learner](const Dataset &d) {
      return cross_val(sample.empty() ? d : d.select_rows(sample), folds, learner).mean;
    };
  }
  base_perf_ = evaluate(base_data_);
  reset();
}

double Environment::evaluate(const Dataset &d) {
  auto key = cache_key(d);
  if (auto it = cache_->find(key); it != cache_->end()) return it->second;
  double v = perf_fn_(d);
  if (!std::isfinite(v)) throw Error(ErrorCode::degenerate_metric, "performance is not finite");
  cache_->emplace(std::move(key), v);
  return v;
}

void Environment::reset() {
  data_ = base_data_;
  graph_ = base_graph_;
  pipeline_.clear();
  generated_.clear();
  steps_ = 0;
  perf_ = base_perf_;
  last_reward_ = 0.0;
}

std::vector<uint8_t> Environment::mask() const {
  std::vector<uint8_t> m(actions_.size(), 0);
  for (size_t a = 0; a < actions_.size(); ++a)
    m[a] = !applicable_operands(*actions_[a], data_, &kb_).empty();
  return m;
}

double Environment::mean_generated_interpretability() const {
  return dataset_interpretability(graph_, generated_).mean;
}

double Environment::objective() const {
  return cfg_.lambda * perf_ + (1 - cfg_.lambda) * mean_generated_interpretability();
}

Eigen::VectorXd Environment::state() const {
  return vectorize(data_, kb_, layout_,
                   {steps_, cfg_.m, last_reward_, mean_generated_interpretability()});
}

StepOutcome Environment::step(size_t action) {
  if (action >= actions_.size()) throw Error(ErrorCode::invalid_argument, "action index out of range");
  if (steps_ >= cfg_.m) throw Error(ErrorCode::invalid_argument, "episode already terminal");
  const Transform &t = *actions_[action];

  struct Candidate {
    Column col;
    std::vector<std::string> operands;
    bool non_interpretable;
    double relevance = 0.0;
  };
  std::vector<Candidate> cands;
  auto features = data_.features();
  for (auto &tuple : applicable_operands(t, data_, &kb_)) {
    if (cfg_.drop_noninterp && tuple.non_interpretable) continue;
    std::vector<const Column *> ops;
    for (auto &name : tuple.operands) ops.push_back(data_.find(name));
    for (auto &col : apply(t, ops, &kb_)) {
      if (data_.find(col.name) || constant_column(col)) continue;
      bool dup = std::any_of(features.begin(), features.end(), [&](auto *f) { return f->same_cells(col); }) ||
                 std::any_of(cands.begin(), cands.end(), [&](auto &c) { return c.col.name == col.name || c.col.same_cells(col); });
      if (dup) continue;
      cands.push_back({std::move(col), tuple.operands, tuple.non_interpretable});
    }
  }
  for (auto &c : cands) c.relevance = relevance(c.col, target_, data_.task(), rank_rows_);
  std::stable_sort(cands.begin(), cands.end(),
                   [](auto &a, auto &b) { return a.relevance > b.relevance; });
  if (cands.size() > cfg_.top_k) cands.resize(cfg_.top_k);

  StepRecord rec;
  rec.episode = episode_;
  rec.step = steps_;
  rec.action = action;
  rec.transform = t.id;
  rec.lambda = cfg_.lambda;
  rec.perf_before = perf_;
  rec.perf_after = perf_;

  if (!cands.empty()) {
    DecompositionGraph graph = graph_;
    Dataset next = data_;
    PipelineStep ps{t.id, {}};
    std::vector<NodeId> added;
    for (auto &c : cands) {
      std::vector<NodeId> operand_nodes;
      for (auto &name : c.operands) operand_nodes.push_back(*next.origin(name));
      NodeId id = graph.add_application(t.id, operand_nodes, c.col.name, c.non_interpretable);
      added.push_back(id);
      ps.features.push_back({c.col.name, c.operands, graph.interpretability(id), c.non_interpretable});
      next = next.append_feature(std::move(c.col), id);
    }
    std::optional<double> perf;
    try {
      perf = evaluate(next);
    } catch (const Error &) {
      // A failed evaluation leaves the state untouched.
    }
    if (perf) {
      rec.perf_after = *perf;
      rec.new_features = added.size();
      rec.mean_interp_new = dataset_interpretability(graph, added).mean;
      data_ = std::move(next);
      graph_ = std::move(graph);
      generated_.insert(generated_.end(), added.begin(), added.end());
      pipeline_.push_back(std::move(ps));
      perf_ = *perf;
    }
  }
  rec.reward = cfg_.lambda * (rec.perf_after - rec.perf_before) + (1 - cfg_.lambda) * rec.mean_interp_new;
  ++steps_;
  last_reward_ = rec.reward;
  rec.objective = objective();

  StepOutcome out;
  out.reward = rec.reward;
  out.record = rec;
  if (steps_ >= cfg_.m) {
    out.terminal = true;
  } else {
    auto m = mask();
    out.terminal = std::none_of(m.begin(), m.end(), [](uint8_t v) { return v != 0; });
  }
  return out;
}

namespace {

void snapshot(PipelineResult &r, const Environment &env, const std::vector<double> &perf,
              const std::vector<double> &interp, size_t episode) {
  r.best_pipeline = env.pipeline();
  r.best_dataset = env.data();
  r.best_graph = env.graph();
  r.perf_trace = perf;
  r.interp_trace = interp;
  r.objective = env.objective();
  r.performance = env.performance();
  r.mean_interpretability = env.mean_generated_interpretability();
  r.best_episode = episode;
}

using Chooser = std::function<size_t(const Eigen::VectorXd &, size_t episode, std::span<const uint8_t>)>;
using Observer = std::function<std::optional<double>(Transition)>;

PipelineResult run_episodes(Environment &env, const SearchConfig &cfg, const Chooser &choose,
                            const Observer &observe, const std::function<double(size_t)> &epsilon) {
  PipelineResult res;
  snapshot(res, env, {env.performance()}, {0.0}, 0);
  for (size_t ep = 0; ep < cfg.episodes; ++ep) {
    env.reset();
    env.set_episode(ep);
    auto mask = env.mask();
    if (std::none_of(mask.begin(), mask.end(), [](uint8_t v) { return v != 0; })) break;
    Eigen::VectorXd s = env.state();
    std::vector<double> perf{env.performance()}, interp{0.0};
    for (;;) {
      size_t a = choose(s, ep, mask);
      StepOutcome out = env.step(a);
      Eigen::VectorXd s2 = env.state();
      std::vector<uint8_t> next_mask = out.terminal ? std::vector<uint8_t>{} : env.mask();
      std::optional<double> loss = observe({s, a, out.reward, s2, out.terminal, next_mask});
      res.log.push_back({ep, out.record.step, epsilon(ep), loss, out.reward});
      res.ledger.push_back(out.record);
      perf.push_back(env.performance());
      interp.push_back(env.mean_generated_interpretability());
      if (env.objective() > res.objective) snapshot(res, env, perf, interp, ep);
      if (out.terminal) break;
      s = std::move(s2);
      mask = std::move(next_mask);
    }
  }
  return res;
}

} // namespace

PipelineResult train(const Dataset &exploited, const DecompositionGraph &graph,
                     const KnowledgeBase &kb, const SearchConfig &cfg, PerformanceFn perf) {
  Environment env(exploited, graph, kb, cfg, std::move(perf));
  DqnAgent agent(static_cast<int>(env.layout().size()), static_cast<int>(env.actions().size()),
                 cfg.agent, cfg.seed);
  EpsilonSchedule sched{cfg.agent.eps0, cfg.agent.eps_min, cfg.agent.eps_decay};
  auto eps = [&](size_t ep) { return sched.at(ep); };
  auto res = run_episodes(
      env, cfg,
      [&](const Eigen::VectorXd &s, size_t ep, std::span<const uint8_t> mask) {
        return agent.act(s, sched.at(ep), mask);
      },
      [&](Transition t) { return agent.observe(std::move(t)); }, eps);
  res.network = agent.network();
  return res;
}

PipelineResult random_baseline(const Dataset &exploited, const DecompositionGraph &graph,
                               const KnowledgeBase &kb, const SearchConfig &cfg,
                               PerformanceFn perf) {
  Environment env(exploited, graph, kb, cfg, std::move(perf));
  std::mt19937_64 rng(cfg.seed);
  return run_episodes(
      env, cfg,
      [&](const Eigen::VectorXd &, size_t, std::span<const uint8_t> mask) {
        std::vector<size_t> valid;
        for (size_t a = 0; a < mask.size(); ++a)
          if (mask[a]) valid.push_back(a);
        std::uniform_int_distribution<size_t> pick(0, valid.size() - 1);
        return valid[pick(rng)];
      },
      [](Transition) { return std::optional<double>{}; }, [](size_t) { return 1.0; });
}

SpaceSize search_space_size(uint64_t p, const std::map<size_t, uint64_t> &by_operands) {
  if (p < 1) throw Error(ErrorCode::invalid_argument, "feature count must be at least 1");
  uint64_t total = 0;
  bool overflow = false;
  for (auto [arity, count] : by_operands) {
    if (arity > p || count == 0) continue;
    uint64_t perms = 1;
    for (uint64_t j = 0; j < arity && !overflow; ++j) overflow |= __builtin_mul_overflow(perms, p - j, &perms);
    uint64_t term = 0;
    overflow = overflow || __builtin_mul_overflow(perms, count, &term) || __builtin_add_overflow(total, term, &total);
    if (overflow) break;
  }
  if (!overflow) return {total, std::to_string(total)};
  using boost::multiprecision::cpp_int;
  cpp_int big = 0;
  for (auto [arity, count] : by_operands) {
    if (arity > p) continue;
    cpp_int perms = 1;
    for (uint64_t j = 0; j < arity; ++j) perms *= p - j;
    big += perms * count;
  }
  return {std::nullopt, big.str()};
}

SpaceSize search_space_size(uint64_t p, std::span<const Transform *const> transforms) {
  std::map<size_t, uint64_t> by_operands;
  for (auto *t : transforms) ++by_operands[t->operand_count()];
  return search_space_size(p, by_operands);
}

PipelineResult exhaustive_oracle(const Dataset &exploited, const DecompositionGraph &graph,
                                 const KnowledgeBase &kb, size_t depth, const SearchConfig &cfg,
                                 PerformanceFn perf) {
  if (depth > 2) throw Error(ErrorCode::invalid_argument, "oracle depth must be at most 2");
  SearchConfig local = cfg;
  local.m = std::max<size_t>(depth, 1);
  if (depth > 0 && exploited.p() > 0) {
    auto actions = builtin_catalog().actions();
    SpaceSize size = search_space_size(exploited.p(), actions);
    double projected = 0;
    double per_level = size.value ? static_cast<double>(*size.value) : HUGE_VAL;
    for (size_t j = 1; j <= depth; ++j) projected += std::pow(per_level, static_cast<double>(j));
    if (projected > kOracleBudget)
      throw Error(ErrorCode::budget_exceeded,
                  "exhaustive search over " + std::to_string(exploited.p()) + " features spans " +
                      size.decimal + " candidates per level, over the budget of " +
                      std::to_string(static_cast<uint64_t>(kOracleBudget)));
  }
  Environment root(exploited, graph, kb, local, std::move(perf));
  PipelineResult res;
  snapshot(res, root, {root.performance()}, {0.0}, 0);
  if (depth == 0) return res;

  auto consider = [&](const Environment &env, std::vector<double> p, std::vector<double> i) {
    if (env.objective() > res.objective) snapshot(res, env, p, i, 0);
  };
  auto mask = root.mask();
  for (size_t a = 0; a < mask.size(); ++a) {
    if (!mask[a]) continue;
    Environment one = root;
    auto out1 = one.step(a);
    res.ledger.push_back(out1.record);
    std::vector<double> p1{root.performance(), one.performance()};
    std::vector<double> i1{0.0, one.mean_generated_interpretability()};
    consider(one, p1, i1);
    if (depth < 2 || out1.terminal) continue;
    auto mask2 = one.mask();
    for (size_t b = 0; b < mask2.size(); ++b) {
      if (!mask2[b]) continue;
      Environment two = one;
      auto out2 = two.step(b);
      res.ledger.push_back(out2.record);
      auto p2 = p1, i2 = i1;
      p2.push_back(two.performance());
      i2.push_back(two.mean_generated_interpretability());
      consider(two, p2, i2);
    }
  }
  return res;
}

} // namespace kgfe
