#include <doctest.h>

#include <algorithm>
#include <json.hpp>
#include <random>

#include "decomp.hpp"
#include "error.hpp"

using namespace kgfe;

namespace {

// Every derivation tree of x, scored as weight times the weakest operand
// tree, flagged applications contributing 0. Returns the best tree value.
double best_tree(const DecompositionGraph &g, NodeId x) {
  const auto &n = g.node(x);
  if (n.base_score) return *n.base_score;
  double best = 0.0;
  for (auto *a : g.incoming(x)) {
    if (a->non_interpretable) continue;
    std::vector<std::vector<double>> choices;
    for (auto op : a->operands) {
      std::vector<double> vals;
      // One value per operand tree: expand incoming applications separately.
      std::function<void(NodeId)> collect = [&](NodeId y) {
        const auto &m = g.node(y);
        if (m.base_score) {
          vals.push_back(*m.base_score);
          return;
        }
        for (auto *b : g.incoming(y)) {
          if (b->non_interpretable) {
            vals.push_back(0.0);
            continue;
          }
          std::vector<std::vector<double>> sub;
          for (auto o : b->operands) {
            std::vector<double> saved;
            std::swap(saved, vals);
            collect(o);
            sub.push_back(vals);
            vals = std::move(saved);
          }
          std::vector<double> mins{1.0};
          for (auto &s : sub) {
            std::vector<double> next;
            for (double m0 : mins)
              for (double v : s) next.push_back(std::min(m0, v));
            mins = next;
          }
          for (double m0 : mins) vals.push_back(g.transform_weight(b->transform) * m0);
        }
      };
      collect(op);
      choices.push_back(vals);
    }
    std::vector<double> mins{1.0};
    for (auto &s : choices) {
      std::vector<double> next;
      for (double m0 : mins)
        for (double v : s) next.push_back(std::min(m0, v));
      mins = next;
    }
    for (double m0 : mins) best = std::max(best, g.transform_weight(a->transform) * m0);
  }
  return best;
}

DecompositionGraph bmi_graph() {
  DecompositionGraph g({{"square", 0.9}, {"div", 0.95}});
  auto w = g.add_known("weight", 1.0);
  auto h = g.add_known("height", 1.0);
  std::vector<NodeId> sq{h};
  auto h2 = g.add_application("square", sq, "square(height)");
  std::vector<NodeId> ops{w, h2};
  g.add_application("div", ops, "div(weight,square(height))");
  return g;
}

} // namespace

TEST_CASE("known nodes return their base score") {
  DecompositionGraph g;
  auto a = g.add_known("a", 1.0);
  auto r = g.add_known("r", 0.8, NodeKind::raw);
  CHECK(g.interpretability(a) == 1.0);
  CHECK(g.interpretability(r) == 0.8);
  CHECK_THROWS_AS(g.add_known("bad", 1.5), Error);
}

TEST_CASE("single chain") {
  DecompositionGraph g({{"log", 0.9}});
  auto a = g.add_known("a", 1.0);
  std::vector<NodeId> ops{a};
  auto f = g.add_application("log", ops, "log(a)");
  CHECK(g.interpretability(f) == doctest::Approx(0.9));
}

TEST_CASE("max over two applications") {
  DecompositionGraph g({{"log", 0.9}, {"div", 0.95}});
  auto a = g.add_known("a", 1.0);
  auto b = g.add_known("b", 0.76);
  std::vector<NodeId> one{a}, two{a, b};
  auto x = g.add_application("log", one, "x");
  g.add_application("div", two, "x");
  CHECK(g.interpretability(x) == doctest::Approx(0.9));
  CHECK(best_tree(g, x) == doctest::Approx(0.9));
}

TEST_CASE("flagged applications score zero") {
  DecompositionGraph g({{"add", 0.95}});
  auto a = g.add_known("a", 1.0);
  auto b = g.add_known("b", 1.0);
  std::vector<NodeId> ops{a, b};
  auto x = g.add_application("add", ops, "add(a,b)", true);
  CHECK(g.interpretability(x) == 0.0);
  std::vector<NodeId> xs{x};
  CHECK(dataset_interpretability(g, xs).mean == 0.0);
}

TEST_CASE("BMI graph structure and exports") {
  auto g = bmi_graph();
  CHECK(g.nodes().size() == 4);
  size_t edges = 0;
  for (auto &a : g.applications()) edges += a.operands.size();
  CHECK(edges == 3);
  auto bmi = *g.find("div(weight,square(height))");
  CHECK(g.interpretability(bmi) == doctest::Approx(0.95 * 0.9));
  auto dot = g.export_dot();
  size_t arrows = 0;
  for (size_t p = dot.find("->"); p != std::string::npos; p = dot.find("->", p + 2)) ++arrows;
  CHECK(arrows == 3);
  CHECK(g.export_dot() == dot);
  auto j = nlohmann::json::parse(g.export_json());
  CHECK(j["nodes"].size() == 4);
  auto back = DecompositionGraph::from_json(g.export_json());
  CHECK(back.export_json() == g.export_json());
  CHECK(back.interpretability(*back.find("div(weight,square(height))")) == doctest::Approx(0.855));
}

TEST_CASE("topological order breaks ties by name") {
  auto g = bmi_graph();
  std::vector<std::string> names;
  for (auto id : g.topological_order()) names.push_back(g.node(id).name);
  CHECK(names == std::vector<std::string>{"height", "square(height)", "weight", "div(weight,square(height))"});
}

TEST_CASE("duplicate application is a no-op") {
  auto g = bmi_graph();
  auto h = *g.find("height");
  std::vector<NodeId> sq{h};
  auto before = g.applications().size();
  auto again = g.add_application("square", sq, "square(height)");
  CHECK(again == *g.find("square(height)"));
  CHECK(g.applications().size() == before);
}

TEST_CASE("cycles are rejected") {
  auto g = bmi_graph();
  auto bmi = *g.find("div(weight,square(height))");
  std::vector<NodeId> self{bmi};
  try {
    g.add_application("log", self, "div(weight,square(height))");
    FAIL("expected a cycle error");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::cycle);
  }
  std::vector<NodeId> back{bmi};
  CHECK_THROWS_AS(g.add_application("log", back, "square(height)"), Error);
}

TEST_CASE("dataset interpretability is a mean") {
  DecompositionGraph g({{"log", 0.9}, {"div", 0.95}});
  auto a = g.add_known("a", 1.0);
  auto b = g.add_known("b", 0.76);
  std::vector<NodeId> one{a}, two{a, b};
  auto x = g.add_application("log", one, "log(a)");
  auto y = g.add_application("div", two, "div(a,b)");
  std::vector<NodeId> fs{a, x, y};
  auto s = dataset_interpretability(g, fs);
  CHECK(s.mean == doctest::Approx((1.0 + 0.9 + 0.722) / 3.0));
  CHECK(s.mean == doctest::Approx(0.874).epsilon(0.001));
  CHECK(s.count == 3);
  CHECK(dataset_interpretability(g, std::span<const NodeId>{}).mean == 0.0);
}

TEST_CASE("scores match exhaustive tree enumeration on random graphs") {
  std::mt19937_64 rng(5);
  const std::vector<std::string> ts{"log", "div", "mul", "square"};
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    DecompositionGraph g({{"log", u(rng)}, {"div", u(rng)}, {"mul", u(rng)}, {"square", u(rng)}});
    std::vector<NodeId> ids;
    int known = 2 + int(rng() % 3);
    for (int i = 0; i < known; ++i) ids.push_back(g.add_known("k" + std::to_string(i), u(rng)));
    int total = 5 + int(rng() % 8);
    for (int i = known; i < total; ++i) {
      std::string name = "g" + std::to_string(i);
      int apps = 1 + int(rng() % 2);
      NodeId product{};
      for (int k = 0; k < apps; ++k) {
        size_t arity = 1 + rng() % 2;
        std::vector<NodeId> ops;
        for (size_t o = 0; o < arity; ++o) ops.push_back(ids[rng() % ids.size()]);
        product = g.add_application(ts[rng() % ts.size()], ops, name, rng() % 10 == 0);
      }
      ids.push_back(product);
    }
    for (auto id : ids) {
      CHECK(g.interpretability(id) == doctest::Approx(best_tree(g, id)));
      CHECK(g.interpretability(id) == doctest::Approx(g.interpretability_uncached(id)));
    }
  }
}
