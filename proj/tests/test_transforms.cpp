#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "error.hpp"
#include "kg_store.hpp"
#include "transforms.hpp"

using namespace kgfe;

namespace {

Column with_unit(Column c, const char *unit) {
  c.unit = UnitExpr::base(unit);
  return c;
}

Column typed(Column c, DType t) {
  c.dtype = t;
  return c;
}

std::vector<Column> run(std::string_view id, std::vector<const Column *> ops, const KnowledgeBase *kb = nullptr,
                        std::string_view param = {}) {
  return kgfe::apply(builtin_catalog().at(id), std::span<const Column *const>(ops), kb, param);
}

} // namespace

TEST_CASE("catalog shape") {
  const auto &cat = builtin_catalog();
  // Enumerated by family: unary, binary, aggregation, date, geo, lookup.
  const std::vector<std::vector<std::string>> families{
      {"log", "sqrt", "square", "reciprocal", "one_hot"},
      {"add", "sub", "mul", "div", "and", "or"},
      {"group_by_mean", "group_by_sum", "group_by_min", "group_by_max", "group_by_count"},
      {"extract_day", "extract_month", "extract_year", "is_weekend", "is_rush_hour", "time_diff_hours"},
      {"haversine_km"},
      {"triple_lookup"}};
  size_t total = 0;
  for (auto &f : families) {
    total += f.size();
    for (auto &id : f) CHECK(cat.find(id));
  }
  CHECK(cat.transforms().size() == total);
  CHECK(cat.actions().size() == total - 1);
  CHECK(total - 1 == 23);
  CHECK(cat.find("haversine_km"));
  CHECK(cat.at("is_rush_hour").output == DType::boolean);
  std::set<std::string> ids;
  for (auto &t : cat.transforms()) ids.insert(t.id);
  CHECK(ids.size() == cat.transforms().size());
  for (auto *t : cat.actions()) CHECK(t->id != "triple_lookup");
  CHECK(cat.class_members("arith") == std::vector<std::string>{"add", "sub", "mul", "div"});
  CHECK(cat.class_members("nope").empty());
  CHECK_THROWS_AS(cat.at("nope"), Error);
}

TEST_CASE("square keeps units") {
  auto h = with_unit(Column::numeric("height", {1.70, 1.80}), "metre");
  auto out = run("square", {&h});
  REQUIRE(out.size() == 1);
  CHECK(out[0].name == "square(height)");
  CHECK(out[0].values[0] == doctest::Approx(2.89));
  CHECK(out[0].values[1] == doctest::Approx(3.24));
  CHECK(unit_str(out[0].unit) == "metre^2");
  CHECK(out[0].concept_name == kUnknownConcept);
}

TEST_CASE("log domain") {
  auto x = Column::numeric("x", {1.0, 0.0, std::exp(1.0)});
  auto out = run("log", {&x})[0];
  CHECK(out.has(0));
  CHECK_FALSE(out.has(1));
  CHECK(out.values[0] == doctest::Approx(0.0));
  CHECK(out.values[2] == doctest::Approx(1.0));
  auto s = Column::numeric("s", {-4.0, 9.0});
  CHECK_FALSE(run("sqrt", {&s})[0].has(0));
  auto z = Column::numeric("z", {0.0, 2.0});
  auto r = run("reciprocal", {&z})[0];
  CHECK_FALSE(r.has(0));
  CHECK(r.values[1] == 0.5);
}

TEST_CASE("division by zero is an absent cell") {
  auto a = Column::numeric("a", {1.0, 2.0, std::nullopt});
  auto b = Column::numeric("b", {0.0, 4.0, 1.0});
  auto out = run("div", {&a, &b})[0];
  CHECK_FALSE(out.has(0));
  CHECK(out.values[1] == 0.5);
  CHECK_FALSE(out.has(2));
}

TEST_CASE("BMI unit algebra") {
  auto w = with_unit(Column::numeric("weight", {70.0}), "kilogram");
  auto h = with_unit(Column::numeric("height", {2.0}), "metre");
  auto h2 = run("square", {&h})[0];
  auto bmi = run("div", {&w, &h2})[0];
  CHECK(bmi.name == "div(weight,square(height))");
  CHECK(bmi.values[0] == doctest::Approx(17.5));
  CHECK(unit_str(bmi.unit) == "kilogram/metre^2");
}

TEST_CASE("add over mismatched units is flagged, never self-paired") {
  auto kb = parse_kg_text("unit kilogram dim mass\nunit euro dim currency\nnoninterp add when units_differ\n");
  Dataset d({with_unit(Column::numeric("mass", {1.0, 2.0}), "kilogram"),
             with_unit(Column::numeric("price", {3.0, 4.0}), "euro"), Column::numeric("y", {1.0, 2.0})},
            "y", Task::regression);
  auto tuples = applicable_operands(builtin_catalog().at("add"), d, &kb);
  REQUIRE(tuples.size() == 2);
  CHECK(tuples[0].operands == std::vector<std::string>{"mass", "price"});
  CHECK(tuples[1].operands == std::vector<std::string>{"price", "mass"});
  CHECK(tuples[0].non_interpretable);
  CHECK(tuples[1].non_interpretable);
  auto no_kb = applicable_operands(builtin_catalog().at("add"), d, nullptr);
  CHECK_FALSE(no_kb[0].non_interpretable);
}

TEST_CASE("haversine needs geo columns") {
  Dataset d({Column::numeric("a", {1.0, 2.0}), Column::numeric("y", {1.0, 2.0})}, "y", Task::regression);
  CHECK(applicable_operands(builtin_catalog().at("haversine_km"), d, nullptr).empty());
}

TEST_CASE("haversine distance") {
  auto la1 = typed(Column::numeric("lat1", {48.8566, 0.0}), DType::geo_lat);
  auto lo1 = typed(Column::numeric("lon1", {2.3522, 0.0}), DType::geo_lon);
  auto la2 = typed(Column::numeric("lat2", {45.7640, 0.0}), DType::geo_lat);
  auto lo2 = typed(Column::numeric("lon2", {4.8357, 1.0}), DType::geo_lon);
  auto out = run("haversine_km", {&la1, &lo1, &la2, &lo2})[0];
  CHECK(out.values[0] == doctest::Approx(392.2).epsilon(0.01)); // Paris to Lyon
  CHECK(out.values[1] == doctest::Approx(kEarthRadiusKm * M_PI / 180.0));
  Dataset d({la1, lo1, la2, lo2, Column::numeric("y", {1.0, 2.0})}, "y", Task::regression);
  auto tuples = applicable_operands(builtin_catalog().at("haversine_km"), d, nullptr);
  CHECK(tuples.size() == 2); // (lat1,lon1,lat2,lon2) and the swapped pair
}

TEST_CASE("date transforms") {
  auto d = parse_csv("a,b,y\n2021-07-17T08:30:00,2021-07-16T08:30:00,1\n2021-07-19T12:00:00,2021-07-19T18:00:00,2\n",
                     {"y"});
  const Column *a = d.find("a"), *b = d.find("b");
  REQUIRE(a->dtype == DType::datetime);
  CHECK(run("is_weekend", {a})[0].values == std::vector<double>{1, 0});
  CHECK(run("is_rush_hour", {a})[0].values == std::vector<double>{1, 0});
  CHECK(run("extract_day", {a})[0].values == std::vector<double>{17, 19});
  CHECK(run("time_diff_hours", {a, b})[0].values == std::vector<double>{24, -6});
  CHECK(unit_str(run("time_diff_hours", {a, b})[0].unit) == "hour");
}

TEST_CASE("aggregations and logical operators") {
  auto key = Column::categorical("k", {std::string("a"), std::string("b"), std::string("a"), std::nullopt});
  auto v = Column::numeric("v", {1.0, 5.0, 3.0, 7.0});
  CHECK(run("group_by_mean", {&key, &v})[0].values[0] == 2.0);
  CHECK(run("group_by_sum", {&key, &v})[0].values[2] == 4.0);
  CHECK(run("group_by_max", {&key, &v})[0].values[1] == 5.0);
  CHECK_FALSE(run("group_by_min", {&key, &v})[0].has(3));
  CHECK(run("group_by_count", {&key})[0].values[0] == 2.0);
  auto p = typed(Column::numeric("p", {1.0, 0.0, 1.0, 0.0}), DType::boolean);
  auto q = typed(Column::numeric("q", {1.0, 1.0, 0.0, 0.0}), DType::boolean);
  CHECK(run("and", {&p, &q})[0].values == std::vector<double>{1, 0, 0, 0});
  CHECK(run("or", {&p, &q})[0].values == std::vector<double>{1, 1, 1, 0});
}

TEST_CASE("one_hot emits one column per kept category") {
  auto c = Column::categorical("city", {std::string("Paris"), std::string("Lyon"), std::string("Paris")});
  auto out = run("one_hot", {&c});
  REQUIRE(out.size() == 2);
  std::set<std::string> names{out[0].name, out[1].name};
  CHECK(names.count("one_hot(city)[Paris]"));
  CHECK(names.count("one_hot(city)[Lyon]"));
}

TEST_CASE("triple_lookup maps labels through the knowledge base") {
  auto kb = parse_kg_text("triple (Paris, population, 2148000)\n");
  auto c = Column::categorical("city", {std::string("Paris"), std::string("Rome")});
  auto out = run("triple_lookup", {&c}, &kb, "population")[0];
  CHECK(out.has(0));
  CHECK_FALSE(out.has(1));
}

TEST_CASE("feature names round-trip") {
  for (std::string name : {"div(weight,square(height))", "log(x)", "one_hot(city)[Paris]",
                           "triple_lookup:population(city)", "haversine_km(a,b,c,d)"}) {
    auto parsed = parse_feature_name(name);
    REQUIRE(parsed);
    auto rebuilt = feature_name(parsed->transform, parsed->operands, parsed->param);
    if (!parsed->selector.empty()) rebuilt += "[" + parsed->selector + "]";
    CHECK(rebuilt == name);
  }
  CHECK_FALSE(parse_feature_name("weight"));
  CHECK_FALSE(parse_feature_name("div(a,b"));
}

TEST_CASE("apply is total over random valid operands") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  std::bernoulli_distribution gap(0.1);
  const size_t n = 64;
  std::vector<std::optional<double>> xs(n), ys(n);
  std::vector<std::optional<std::string>> ks(n);
  for (size_t i = 0; i < n; ++i) {
    xs[i] = gap(rng) ? std::nullopt : std::optional<double>(u(rng));
    ys[i] = gap(rng) ? std::nullopt : std::optional<double>(i % 7 == 0 ? 0.0 : u(rng));
    ks[i] = gap(rng) ? std::nullopt : std::optional<std::string>(std::string(1, char('a' + i % 5)));
  }
  Dataset d({Column::numeric("x", xs), Column::numeric("z", ys), Column::categorical("k", ks),
             typed(Column::numeric("t", xs), DType::datetime), Column::numeric("y", ys)},
            "y", Task::regression);
  for (auto *t : builtin_catalog().actions()) {
    for (auto &tuple : applicable_operands(*t, d, nullptr)) {
      std::vector<const Column *> ops;
      for (auto &o : tuple.operands) ops.push_back(d.find(o));
      std::vector<Column> out;
      CHECK_NOTHROW(out = kgfe::apply(*t, std::span<const Column *const>(ops)));
      for (auto &c : out) {
        CHECK(c.values.size() == n);
        for (size_t i = 0; i < n; ++i)
          if (c.has(i) && c.dtype != DType::categorical) CHECK(std::isfinite(c.values[i]));
      }
    }
  }
}
