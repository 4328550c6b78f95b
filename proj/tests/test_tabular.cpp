#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "error.hpp"
#include "tabular.hpp"
#include "units.hpp"

using namespace kgfe;

namespace {

ErrorCode code_of(auto &&f) {
  try {
    f();
  } catch (const Error &e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::internal;
}

Dataset numeric_rows(size_t n) {
  std::vector<std::optional<double>> x, y;
  for (size_t i = 0; i < n; ++i) {
    x.push_back(static_cast<double>(i));
    y.push_back(static_cast<double>(i * i));
  }
  return Dataset({Column::numeric("x", x), Column::numeric("y", y)}, "y", Task::regression);
}

std::vector<size_t> fold_sizes(const FoldPlan &f) {
  std::vector<size_t> sizes(f.k, 0);
  for (auto a : f.assignments) ++sizes[a];
  std::sort(sizes.rbegin(), sizes.rend());
  return sizes;
}

} // namespace

TEST_CASE("smallest well-formed csv") {
  auto d = parse_csv("w,h,y\n1,2,3\n4,5,6\n7,8,9\n", {"y"});
  CHECK(d.p() == 2);
  CHECK(d.n_rows() == 3);
  CHECK(d.task() == Task::regression);
  CHECK(d.find("w")->dtype == DType::numeric);
}

TEST_CASE("hourly stamps infer datetime") {
  auto d = parse_csv("when,y\n2011-01-01 00:00,1\n2011-01-01 01:00,2\n2012-12-31 23:00,3\n", {"y"});
  const Column *c = d.find("when");
  REQUIRE(c);
  CHECK(c->dtype == DType::datetime);
  auto t = civil_from_epoch(static_cast<int64_t>(c->values[2]));
  CHECK(t.year == 2012);
  CHECK(t.month == 12);
  CHECK(t.day == 31);
  CHECK(t.hour == 23);
}

TEST_CASE("one bad cell in a 99 percent numeric column becomes absent") {
  std::string text = "x,y\n";
  for (int i = 0; i < 100; ++i) text += (i == 37 ? std::string("abc") : std::to_string(i)) + "," + std::to_string(i) + "\n";
  auto d = parse_csv(text, {"y"});
  const Column *x = d.find("x");
  CHECK(x->dtype == DType::numeric);
  CHECK_FALSE(x->has(37));
  CHECK(x->has(36));
  CHECK(x->values[36] == 36.0);
}

TEST_CASE("below the numeric share the column is categorical") {
  std::string text = "x,y\n";
  for (int i = 0; i < 20; ++i) text += (i < 2 ? std::string("abc") : std::to_string(i)) + "," + std::to_string(i) + "\n";
  CHECK(parse_csv(text, {"y"}).find("x")->dtype == DType::categorical);
}

TEST_CASE("load errors are distinct") {
  CHECK(code_of([] { parse_csv("", {"y"}); }) == ErrorCode::empty_file);
  CHECK(code_of([] { parse_csv("a,a,y\n1,2,3\n4,5,6\n", {"y"}); }) == ErrorCode::duplicate_header);
  CHECK(code_of([] { parse_csv("a,b\n1,2\n3,4\n", {"y"}); }) == ErrorCode::target_missing);
  CHECK(code_of([] { load_csv("/nonexistent/file.csv", {"y"}); }) == ErrorCode::io_error);
  CHECK(code_of([] { parse_csv("a,y\n1,2\n", {"y"}); }) == ErrorCode::too_few_rows);
}

TEST_CASE("categorical target infers classification") {
  auto d = parse_csv("a,y\n1,yes\n2,no\n3,yes\n", {"y"});
  CHECK(d.task() == Task::classification);
}

TEST_CASE("schema hints override inference") {
  LoadOptions opts{"y", std::nullopt, parse_schema_hints(R"({"lat":{"dtype":"geo_lat","unit":"degree","concept":"Latitude"}})")};
  auto d = parse_csv("lat,y\n48.8,1\n45.7,2\n", opts);
  const Column *c = d.find("lat");
  CHECK(c->dtype == DType::geo_lat);
  CHECK(c->concept_name == "Latitude");
  CHECK(unit_str(c->unit) == "degree");
}

TEST_CASE("quoted fields follow RFC 4180") {
  auto d = parse_csv("name,y\n\"Smith, J\",1\n\"say \"\"hi\"\"\",2\n", {"y"});
  CHECK(d.find("name")->labels[0] == "Smith, J");
  CHECK(d.find("name")->labels[1] == "say \"hi\"");
}

TEST_CASE("make_folds sizes") {
  CHECK(fold_sizes(make_folds(numeric_rows(10), 5, 1)) == std::vector<size_t>{2, 2, 2, 2, 2});
  CHECK(fold_sizes(make_folds(numeric_rows(7), 3, 1)) == std::vector<size_t>{3, 2, 2});
  CHECK(make_folds(numeric_rows(50), 5, 9).assignments == make_folds(numeric_rows(50), 5, 9).assignments);
  CHECK(make_folds(numeric_rows(50), 5, 9).assignments != make_folds(numeric_rows(50), 5, 10).assignments);
  CHECK(code_of([] { make_folds(numeric_rows(3), 4, 1); }) == ErrorCode::invalid_argument);
  CHECK(code_of([] { make_folds(numeric_rows(3), 1, 1); }) == ErrorCode::invalid_argument);
}

TEST_CASE("folds partition the rows") {
  auto d = numeric_rows(23);
  auto f = make_folds(d, 4, 3);
  std::multiset<size_t> all;
  for (size_t k = 0; k < 4; ++k) {
    auto test = f.test_rows(k), train = f.train_rows(k);
    CHECK(test.size() + train.size() == 23);
    all.insert(test.begin(), test.end());
    for (size_t r : test) CHECK(std::find(train.begin(), train.end(), r) == train.end());
  }
  CHECK(all.size() == 23);
  CHECK(std::set<size_t>(all.begin(), all.end()).size() == 23);
}

TEST_CASE("classification folds are stratified") {
  std::string text = "x,y\n";
  for (int i = 0; i < 40; ++i) text += std::to_string(i) + "," + (i % 4 == 0 ? "a" : "b") + "\n";
  auto d = parse_csv(text, {"y"});
  auto f = make_folds(d, 5, 11);
  for (size_t k = 0; k < 5; ++k) {
    size_t minority = 0;
    for (size_t r : f.test_rows(k)) minority += d.target().labels[r] == "a";
    CHECK(minority == 2);
  }
}

TEST_CASE("append_feature has value semantics") {
  auto d = numeric_rows(4);
  uint64_t before = d.hash();
  auto e = d.append_feature(Column::numeric("BMI", {1.0, 2.0, 3.0, 4.0}), NodeId{7});
  CHECK(e.p() == 2);
  CHECK(e.origin("BMI") == NodeId{7});
  CHECK(d.p() == 1);
  CHECK(d.hash() == before);

  auto f = e.append_feature(Column::numeric("log_x", {1.0, 2.0, 3.0, 4.0}), NodeId{8})
               .append_feature(Column::numeric("log_x", {2.0, 2.0, 3.0, 4.0}), NodeId{9});
  CHECK(f.find("log_x_2"));
  CHECK(f.origin("log_x_2") == NodeId{9});
  CHECK(code_of([&] { d.append_feature(Column::numeric("z", {1.0}), NodeId{1}); }) == ErrorCode::length_mismatch);
}

TEST_CASE("write_csv round-trips") {
  std::string text =
      "when,city,v,flag,y\n"
      "2020-03-01T08:30:00,Paris,1.5,true,0.1\n"
      "2020-03-02T17:00:00,\"Lyon, FR\",,false,0.25\n"
      "2020-03-07T09:15:30,,-2e-07,true,3\n";
  LoadOptions opts{"y", std::nullopt, parse_schema_hints(R"({"flag":{"dtype":"boolean"}})")};
  auto d = parse_csv(text, opts);
  auto again = parse_csv(write_csv(d), opts);
  REQUIRE(again.columns().size() == d.columns().size());
  for (size_t i = 0; i < d.columns().size(); ++i) {
    CAPTURE(d.columns()[i]->name);
    CHECK(d.columns()[i]->name == again.columns()[i]->name);
    CHECK(d.columns()[i]->dtype == again.columns()[i]->dtype);
    CHECK(d.columns()[i]->same_cells(*again.columns()[i]));
  }
}

TEST_CASE("unit algebra") {
  auto kg = UnitExpr::base("kilogram");
  auto m = UnitExpr::base("metre");
  auto bmi = kg * m.pow(2).inverse();
  CHECK(bmi.str() == "kilogram/metre^2");
  CHECK(UnitExpr::parse("kilogram/metre^2") == bmi);
  CHECK(UnitExpr::parse("1")->is_dimensionless());
  CHECK((m * m.inverse()).is_dimensionless());
  CHECK(m.pow(2).sqrt() == m);
  CHECK_FALSE(m.sqrt());
}
