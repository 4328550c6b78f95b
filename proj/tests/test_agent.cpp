#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "agent.hpp"
#include "error.hpp"
#include "kg_store.hpp"

using namespace kgfe;

namespace {

Eigen::VectorXd random_state(std::mt19937_64 &rng, int dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd s(dim);
  for (int i = 0; i < dim; ++i) s(i) = g(rng);
  return s;
}

Transition make_transition(Eigen::VectorXd s, size_t a, double r, Eigen::VectorXd s2, bool terminal) {
  Transition t;
  t.s = std::move(s);
  t.a = a;
  t.r = r;
  t.s2 = std::move(s2);
  t.terminal = terminal;
  return t;
}

// Network whose output layer is zero except for a bias, so Q(s) = bias.
QNetwork constant_network(int in, int out, const std::vector<double> &bias) {
  QNetwork q({in, 4, out}, 1);
  Eigen::VectorXd p = q.params();
  // Layout: W1 (4 x in), b1 (4), W2 (out x 4), b2 (out).
  Eigen::Index w2 = 4 * in + 4;
  p.segment(w2, out * 4).setZero();
  for (int i = 0; i < out; ++i) p(w2 + out * 4 + i) = bias[i];
  q.set_params(p);
  return q;
}

} // namespace

TEST_CASE("vectorize counts concepts") {
  auto kb = parse_kg_text("concept Mass\nconcept Date\nunit kilogram dim mass\n");
  auto layout = state_layout(kb);
  CHECK(layout.concepts == std::vector<std::string>{"Mass", "Date", "Unknown"});
  CHECK(layout.dimension_groups == std::vector<std::string>{"mass", "dimensionless", "derived", "unknown"});
  CHECK(layout.size() == 3 + 4 + 4);

  auto a = Column::numeric("a", {1.0});
  a.concept_name = "Mass";
  a.unit = UnitExpr::base("kilogram");
  auto b = a;
  b.name = "b";
  Dataset d({a, b, Column::numeric("y", {1.0})}, "y", Task::regression);
  auto v = vectorize(d, kb, layout, {1, 4, 0.0, 0.5});
  CHECK(v(0) == 2);
  CHECK(v(1) == 0);
  CHECK(v(3) == 2); // mass dimension group
  CHECK(v(7) == 2); // feature count
  CHECK(v(8) == 0.25);
  CHECK(v(9) == 0.5);
  CHECK(v(10) == 0.5);

  auto date = Column::numeric("when", {0.0});
  date.concept_name = "Date";
  auto v2 = vectorize(d.append_feature(date, NodeId{}), kb, layout, {1, 4, 0.0, 0.5});
  Eigen::VectorXd diff = v2.head(3) - v.head(3);
  CHECK(diff.sum() == 1);
  CHECK(diff(1) == 1);
  for (double x : v2) CHECK(x >= 0);
}

TEST_CASE("greedy selection and masking") {
  std::mt19937_64 rng(1);
  auto q = constant_network(2, 3, {0.1, 0.9, 0.3});
  Eigen::VectorXd s = Eigen::VectorXd::Zero(2);
  std::vector<uint8_t> all{1, 1, 1}, no_best{1, 0, 1}, none{0, 0, 0};
  CHECK(select_action(q, s, 0.0, all, rng) == 1);
  CHECK(select_action(q, s, 0.0, no_best, rng) == 2);
  CHECK_THROWS_AS(select_action(q, s, 0.0, none, rng), Error);
  Eigen::VectorXd tie(3);
  tie << 0.5, 0.5, 0.1;
  CHECK(greedy_action(tie, all) == 0);
}

TEST_CASE("greedy choice is invariant to positive scaling") {
  std::mt19937_64 rng(2);
  std::vector<uint8_t> mask{1, 0, 1, 1, 1};
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd q = random_state(rng, 5);
    double c = 0.01 + std::abs(random_state(rng, 1)(0)) * 50;
    CHECK(greedy_action(q, mask) == greedy_action(Eigen::VectorXd(q * c), mask));
  }
}

TEST_CASE("epsilon one is uniform over valid actions") {
  std::mt19937_64 rng(3);
  QNetwork q({2, 8, 5}, 4);
  Eigen::VectorXd s = Eigen::VectorXd::Ones(2);
  std::vector<uint8_t> mask{1, 0, 1, 1, 1};
  std::vector<double> counts(5, 0.0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) counts[select_action(q, s, 1.0, mask, rng)] += 1;
  CHECK(counts[1] == 0);
  double expected = draws / 4.0, chi2 = 0;
  for (int a : {0, 2, 3, 4}) chi2 += (counts[a] - expected) * (counts[a] - expected) / expected;
  CHECK(chi2 < 16.27); // 3 degrees of freedom, p = 0.001
}

TEST_CASE("epsilon schedule") {
  EpsilonSchedule e;
  CHECK(e.at(0) == 1.0);
  CHECK(e.at(1) == doctest::Approx(0.97));
  CHECK(e.at(200) == 0.05);
  for (size_t t = 0; t < 200; ++t) CHECK(e.at(t + 1) <= e.at(t));
}

TEST_CASE("td update fixed point and direct loss") {
  auto q = constant_network(2, 2, {1.0, 0.0});
  auto target = q;
  Adam opt(1e-3);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(2);
  auto t = make_transition(s, 0, 1.0, s, false);
  std::vector<const Transition *> batch{&t};
  auto before = q.params();
  CHECK(td_update(q, target, batch, 0.0, opt) == doctest::Approx(0.0));
  CHECK((q.params() - before).norm() == doctest::Approx(0.0));

  auto t1 = make_transition(s, 1, 1.0, s, false);
  std::vector<const Transition *> b1{&t1};
  CHECK(td_update(q, target, b1, 0.0, opt) == doctest::Approx(1.0));

  // Terminal transitions ignore the bootstrap term.
  auto fresh = constant_network(2, 2, {1.0, 0.0});
  auto term = make_transition(s, 0, 1.0, s, true);
  std::vector<const Transition *> bt{&term};
  CHECK(td_update(fresh, target, bt, 0.9, opt) == doctest::Approx(0.0));
  auto boot = make_transition(s, 0, 1.0, s, false);
  std::vector<const Transition *> bb{&boot};
  auto fresh2 = constant_network(2, 2, {1.0, 0.0});
  CHECK(td_update(fresh2, target, bb, 0.9, opt) == doctest::Approx(0.81));
}

TEST_CASE("network gradient matches finite differences") {
  std::mt19937_64 rng(5);
  QNetwork q({5, 7, 6, 3}, 9);
  Eigen::MatrixXd S(5, 8);
  for (int c = 0; c < 8; ++c) S.col(c) = random_state(rng, 5);
  std::vector<size_t> actions{0, 1, 2, 0, 1, 2, 1, 0};
  std::vector<double> targets;
  for (int i = 0; i < 8; ++i) targets.push_back(random_state(rng, 1)(0));
  auto [loss, grad] = q.loss_and_gradient(S, actions, targets);
  Eigen::VectorXd p = q.params(), fd(p.size());
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    QNetwork a = q, b = q;
    Eigen::VectorXd pp = p, pm = p;
    pp(i) += h;
    pm(i) -= h;
    a.set_params(pp);
    b.set_params(pm);
    fd(i) = (a.loss_and_gradient(S, actions, targets).first - b.loss_and_gradient(S, actions, targets).first) /
            (2 * h);
  }
  CHECK((grad - fd).norm() / fd.norm() < 1e-4);
  CHECK(std::isfinite(loss));
}

TEST_CASE("divergence is reported") {
  auto q = constant_network(2, 2, {1.0, 0.0});
  auto target = q;
  Adam opt;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(2);
  auto t = make_transition(s, 0, std::numeric_limits<double>::infinity(), s, false);
  std::vector<const Transition *> batch{&t};
  try {
    td_update(q, target, batch, 0.9, opt);
    FAIL("expected divergence");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::divergence);
  }
}

TEST_CASE("target sync semantics") {
  std::mt19937_64 rng(6);
  QNetwork q({3, 8, 2}, 1), target({3, 8, 2}, 2);
  sync_target(q, target);
  for (int i = 0; i < 10; ++i) {
    auto s = random_state(rng, 3);
    CHECK(q.forward(s) == target.forward(s));
  }
  auto probe = random_state(rng, 3);
  auto frozen = target.forward(probe);
  Adam opt(1e-2);
  auto t = make_transition(probe, 0, 5.0, probe, true);
  std::vector<const Transition *> batch{&t};
  for (int i = 0; i < 10; ++i) td_update(q, target, batch, 0.9, opt);
  CHECK(target.forward(probe) == frozen);
  CHECK(q.forward(probe) != frozen);
}

TEST_CASE("agent syncs every period") {
  for (size_t period : {size_t(1), size_t(5)}) {
    AgentParams p;
    p.hidden1 = p.hidden2 = 8;
    p.batch = 2;
    p.sync_period = period;
    DqnAgent agent(3, 2, p, 7);
    std::mt19937_64 rng(8);
    for (int i = 0; i < 12; ++i) {
      agent.observe(make_transition(random_state(rng, 3), i % 2, 1.0, random_state(rng, 3), false));
      bool synced = agent.updates() % period == 0;
      CHECK((agent.network() == agent.target()) == synced);
    }
  }
}

TEST_CASE("replay buffer evicts oldest first") {
  ReplayBuffer buf(5, 1);
  for (int i = 0; i < 8; ++i) buf.push(make_transition(Eigen::VectorXd::Constant(1, i), 0, i, Eigen::VectorXd(), true));
  CHECK(buf.size() == 5);
  for (size_t i = 0; i < 5; ++i) CHECK(buf.at(i).r == double(i + 3));
  for (auto *t : buf.sample(50)) CHECK(t->r >= 3);
}

TEST_CASE("checkpoint round-trip") {
  QNetwork q({4, 64, 64, 22}, 3);
  auto bytes = q.serialize();
  CHECK(bytes.substr(0, 4) == "SMFE");
  CHECK(QNetwork::deserialize(bytes) == q);
  auto path = (std::filesystem::temp_directory_path() / "kgfe_ckpt_test.smfe").string();
  q.save(path);
  CHECK(QNetwork::load(path) == q);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(QNetwork::deserialize("XXXX"), Error);
  CHECK_THROWS_AS(QNetwork::deserialize(bytes.substr(0, bytes.size() - 3)), Error);
}

TEST_CASE("same seed gives identical weights") {
  auto run = [] {
    AgentParams p;
    p.batch = 4;
    DqnAgent agent(3, 2, p, 11);
    std::mt19937_64 rng(12);
    for (int i = 0; i < 40; ++i)
      agent.observe(make_transition(random_state(rng, 3), i % 2, 0.3, random_state(rng, 3), i % 5 == 0));
    return agent.network();
  };
  CHECK(run() == run());
}

TEST_CASE("toy chain converges to the optimal values") {
  // States 0,1,2 (one-hot). Action 0 moves right, and from state 2 ends the
  // episode with reward 1. Action 1 ends the episode with reward 0.5.
  const double gamma = 0.9;
  double qstar[3][2];
  for (int s = 2; s >= 0; --s) {
    qstar[s][1] = 0.5;
    qstar[s][0] = s == 2 ? 1.0 : gamma * std::max(qstar[s + 1][0], qstar[s + 1][1]);
  }
  auto onehot = [](int s) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(3);
    v(s) = 1;
    return v;
  };
  AgentParams p;
  p.gamma = gamma;
  DqnAgent agent(3, 2, p, 21);
  std::mt19937_64 rng(22);
  std::vector<uint8_t> mask{1, 1};
  int s = 0;
  for (int step = 0; step < 5000; ++step) {
    size_t a = agent.act(onehot(s), 1.0, mask);
    bool terminal = a == 1 || s == 2;
    double r = a == 1 ? 0.5 : (s == 2 ? 1.0 : 0.0);
    int next = terminal ? 0 : s + 1;
    agent.observe(make_transition(onehot(s), a, r, onehot(next), terminal));
    s = terminal ? int(rng() % 3) : next;
  }
  double worst = 0;
  for (int st = 0; st < 3; ++st) {
    auto q = agent.network().forward(onehot(st));
    for (int a = 0; a < 2; ++a) worst = std::max(worst, std::abs(q(a) - qstar[st][a]));
  }
  CHECK(worst < 0.05);
}
