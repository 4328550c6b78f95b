#include <doctest.h>

#include <cmath>

#include "error.hpp"
#include "kg_store.hpp"
#include "reasoner.hpp"

using namespace kgfe;

namespace {

Error error_of(auto &&f) {
  try {
    f();
  } catch (const Error &e) {
    return e;
  }
  FAIL("expected an error");
  return Error(ErrorCode::internal, "");
}

const char *kTable1 = R"(
concept Date
concept Day
concept Month
concept Year
concept City
concept PopulationTotal
concept Mass
concept Velocity
concept Energy
concept Stock
unit kilogram dim mass
unit metre dim length
unit metre_per_second dim speed
map weight -> concept:Mass unit:kilogram
map speed -> concept:Velocity unit:metre_per_second
map height -> concept:Unknown unit:metre
map *_datetime -> concept:Date
map city -> concept:City
map inventory -> concept:Stock
derive Date => Day via extract_day, Month via extract_month, Year via extract_year when dtype_is(datetime)
derive City => PopulationTotal via triple_lookup(population)
derive Mass, Velocity => Energy via mul(Mass, square(Velocity))
noninterp add when units_differ
noninterp group_by_sum when concept_is(Stock)
triple (Paris, population, 2148000)
triple (Lyon, population, 513275)
triple (Paris, twin, Rome)
triple (Paris, twin, Kyoto)
)";

} // namespace

TEST_CASE("derive statement with three products") {
  auto kb = parse_kg_text("concept Date\nconcept Day\nconcept Month\nconcept Year\n"
                          "derive Date => Day via extract_day, Month via extract_month, Year via extract_year\n");
  REQUIRE(kb.derivations.size() == 1);
  CHECK(kb.derivations[0].heads == std::vector<std::string>{"Date"});
  CHECK(kb.derivations[0].products.size() == 3);
  CHECK(kb.derivations[0].products[1].concept_name == "Month");
  CHECK(kb.derivations[0].products[1].expr.transform == "extract_month");
}

TEST_CASE("noninterp statement") {
  auto kb = parse_kg_text("noninterp add when units_differ\n");
  REQUIRE(kb.interp_rules.size() == 1);
  CHECK(kb.interp_rules[0].pattern == "add");
  REQUIRE(kb.interp_rules[0].predicates.size() == 1);
  CHECK(kb.interp_rules[0].predicates[0].kind == OperandPredicate::Kind::units_differ);
}

TEST_CASE("empty file gives an empty knowledge base") {
  CHECK(parse_kg_text("") == KnowledgeBase{});
  CHECK(parse_kg_text("# only a comment\n\n") == KnowledgeBase{});
}

TEST_CASE("diagnostics carry line and column") {
  auto e = error_of([] { parse_kg_text("concept A\nderive A => B via log\n", "f.kg"); });
  CHECK(e.code() == ErrorCode::kg_unknown_reference);
  CHECK(std::string(e.what()).rfind("f.kg:2:", 0) == 0);
  CHECK(error_of([] { parse_kg_text("concept A\nconcept A\n"); }).code() == ErrorCode::kg_duplicate);
  CHECK(error_of([] { parse_kg_text("interp_weight log 1.5\n"); }).code() == ErrorCode::kg_score_range);
  CHECK(error_of([] { parse_kg_text("interp_weight nosuch 0.5\n"); }).code() == ErrorCode::kg_unknown_reference);
  CHECK(error_of([] { parse_kg_text("conceptt A\n"); }).code() == ErrorCode::kg_syntax);
  CHECK(error_of([] { parse_kg_text("noninterp add when\n"); }).code() == ErrorCode::kg_syntax);
  CHECK(error_of([] { parse_kg_text("map x -> concept:Nope\n"); }).code() == ErrorCode::kg_unknown_reference);
}

TEST_CASE("print and parse round-trip") {
  auto kb = parse_kg_text(kTable1);
  CHECK(parse_kg_text(print_kg(kb)) == kb);
  auto demo = parse_kg(std::string(KGFE_DATA_DIR) + "/demo.kg");
  CHECK(parse_kg_text(print_kg(demo)) == demo);
  auto weighted = parse_kg_text("interp_weight log 0.42\ninterp_weight div 1\n");
  CHECK(parse_kg_text(print_kg(weighted)) == weighted);
}

TEST_CASE("transform weights default by class") {
  KnowledgeBase kb;
  CHECK(kb.transform_weight("div") == 0.95);
  CHECK(kb.transform_weight("log") == 0.90);
  CHECK(kb.transform_weight("group_by_mean") == 0.85);
  CHECK(kb.transform_weight("and") == 0.90);
  CHECK(kb.transform_weight("one_hot") == 0.95);
  CHECK(kb.transform_weight("haversine_km") == 0.95);
  CHECK(kb.transform_weight("is_weekend") == 0.95);
  CHECK(parse_kg_text("interp_weight log 0.5\n").transform_weight("log") == 0.5);
}

TEST_CASE("column mapping") {
  auto kb = parse_kg_text(kTable1);
  Dataset d({Column::numeric("Weight", {70.0, 80.0}), Column::numeric("pickup_datetime", {0.0, 3600.0}),
             Column::numeric("z42", {1.0, 2.0}), Column::numeric("y", {1.0, 2.0})},
            "y", Task::regression);
  auto m = map_columns(kb, d);
  CHECK(m.find("Weight")->concept_name == "Mass");
  CHECK(unit_str(m.find("Weight")->unit) == "kilogram");
  CHECK(m.find("pickup_datetime")->concept_name == "Date");
  CHECK(m.find("z42")->concept_name == kUnknownConcept);
  CHECK(m.target().concept_name.empty());
  CHECK(map_columns(kb, m).hash() == m.hash());
}

TEST_CASE("ambiguous mapping is an error naming both concepts") {
  auto kb = parse_kg_text("concept A\nconcept B\nmap x* -> concept:A\nmap *_v -> concept:B\n");
  Dataset d({Column::numeric("x_v", {1.0, 2.0}), Column::numeric("y", {1.0, 2.0})}, "y", Task::regression);
  auto e = error_of([&] { map_columns(kb, d); });
  CHECK(e.code() == ErrorCode::ambiguous_mapping);
  std::string msg = e.what();
  CHECK(msg.find("A") != std::string::npos);
  CHECK(msg.find("B") != std::string::npos);
}

TEST_CASE("lookup_related") {
  auto kb = parse_kg_text(kTable1);
  CHECK(kb.lookup_related("Paris", "population") == std::vector<std::string>{"2148000"});
  CHECK(kb.lookup_related("Atlantis", "population").empty());
  CHECK(kb.lookup_related("Paris", "twin") == std::vector<std::string>{"Rome", "Kyoto"});
  CHECK(kb.lookup_by_label("  paris ", "population") == "2148000");
}

TEST_CASE("exploit derives Day, Month and Year") {
  auto kb = parse_kg_text(kTable1);
  auto d = parse_csv("pickup_datetime,y\n2021-07-14T10:00:00,1\n2020-02-29T23:59:00,2\n", {"y"});
  auto res = exploit(map_columns(kb, d), kb);
  REQUIRE(res.data.find("Day"));
  CHECK(res.data.find("Day")->values == std::vector<double>{14, 29});
  CHECK(res.data.find("Month")->values == std::vector<double>{7, 2});
  CHECK(res.data.find("Year")->values == std::vector<double>{2021, 2020});
  CHECK(res.data.find("Day")->concept_name == "Day");
  REQUIRE(res.trace.steps.size() == 1);
  CHECK(res.trace.steps[0].produced == std::vector<std::string>{"Day", "Month", "Year"});
  for (auto *name : {"Day", "Month", "Year", "pickup_datetime"})
    CHECK(res.graph.interpretability(*res.data.origin(name)) == 1.0);
}

TEST_CASE("exploit looks up populations through triples") {
  auto kb = parse_kg_text(kTable1);
  auto d = parse_csv("city,y\nParis,1\nLyon,2\nParis,3\n", {"y"});
  auto res = exploit(map_columns(kb, d), kb);
  const Column *pop = res.data.find("PopulationTotal");
  REQUIRE(pop);
  CHECK(pop->dtype == DType::numeric);
  CHECK(pop->values == std::vector<double>{2148000, 513275, 2148000});
}

TEST_CASE("exploit with no mapped concepts is vacuous") {
  KnowledgeBase kb;
  auto d = parse_csv("a,b,y\n1,2,3\n4,5,6\n", {"y"});
  auto res = exploit(map_columns(kb, d), kb);
  CHECK(res.data.p() == 2);
  CHECK(res.trace.steps.empty());
  CHECK(res.graph.interpretability(*res.data.origin("a")) == doctest::Approx(0.8));
}

TEST_CASE("multi-head derivation computes energy") {
  auto kb = parse_kg_text(kTable1);
  auto d = parse_csv("weight,speed,y\n2,3,1\n4,1,2\n", {"y"});
  auto res = exploit(map_columns(kb, d), kb);
  const Column *e = res.data.find("Energy");
  REQUIRE(e);
  CHECK(e->values == std::vector<double>{18, 4});
  CHECK(unit_str(e->unit) == "kilogram*metre_per_second^2");
}

TEST_CASE("exploit is idempotent and replayable") {
  auto kb = parse_kg_text(kTable1);
  auto d = map_columns(kb, parse_csv("pickup_datetime,city,weight,speed,y\n"
                                     "2021-07-14T10:00:00,Paris,2,3,1\n2020-02-29T23:59:00,Lyon,4,1,2\n",
                                     {"y"}));
  auto once = exploit(d, kb);
  auto twice = exploit(once.data, kb);
  CHECK(twice.data.p() == once.data.p());
  CHECK(twice.trace.steps.empty());
  for (auto &step : once.trace.steps) {
    auto cols = replay_step(once.data, kb, step);
    REQUIRE(cols.size() == step.produced.size());
    for (size_t i = 0; i < cols.size(); ++i) CHECK(cols[i].same_cells(*once.data.find(step.produced[i])));
  }
}

TEST_CASE("guard failure is a warning, not a crash") {
  auto kb = parse_kg_text(kTable1);
  auto d = parse_csv("pickup_datetime,y\nnot a date,1\nstill not,2\n", {"y"});
  auto res = exploit(map_columns(kb, d), kb);
  CHECK_FALSE(res.data.find("Day"));
  CHECK_FALSE(res.trace.warnings.empty());
}

TEST_CASE("interpretability rules") {
  auto kb = parse_kg_text(kTable1 + std::string("unit euro dim currency\n"));
  auto weight = Column::numeric("weight", {1.0});
  weight.unit = UnitExpr::base("kilogram");
  auto height = Column::numeric("height", {1.0});
  height.unit = UnitExpr::base("metre");
  auto price = Column::numeric("price", {1.0});
  price.unit = UnitExpr::base("euro");
  auto tax = price;
  tax.name = "tax";
  auto stock = Column::numeric("inventory", {1.0});
  stock.concept_name = "Stock";
  auto key = Column::categorical("store", {std::string("a")});

  std::vector<const Column *> wh{&weight, &height}, pt{&price, &tax}, ks{&key, &stock}, kp{&key, &price};
  CHECK(check_interpretability_rules(kb, "add", wh) == Verdict::non_interpretable);
  CHECK(check_interpretability_rules(kb, "add", pt) == Verdict::interpretable);
  CHECK(check_interpretability_rules(kb, "group_by_sum", ks) == Verdict::non_interpretable);
  CHECK(check_interpretability_rules(kb, "group_by_sum", kp) == Verdict::interpretable);
  CHECK(check_interpretability_rules(kb, "group_by_mean", ks) == Verdict::interpretable);
}

TEST_CASE("class patterns match every member") {
  auto kb = parse_kg_text("unit a dim x\nunit b dim y\nnoninterp class:arith when units_differ\n");
  auto p = Column::numeric("p", {1.0});
  p.unit = UnitExpr::base("a");
  auto q = Column::numeric("q", {1.0});
  q.unit = UnitExpr::base("b");
  std::vector<const Column *> pq{&p, &q};
  CHECK(check_interpretability_rules(kb, "sub", pq) == Verdict::non_interpretable);
  CHECK(check_interpretability_rules(kb, "mul", pq) == Verdict::non_interpretable);
  CHECK(check_interpretability_rules(kb, "log", std::vector<const Column *>{&p}) == Verdict::interpretable);
}
