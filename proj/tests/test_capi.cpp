#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>

#include <kgfe/kgfe.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string take(char *s) {
  std::string out = s ? s : "";
  kgfe_string_free(s);
  return out;
}

std::string data(const char *name) { return std::string(KGFE_DATA_DIR) + "/" + name; }

json demo_config(const fs::path &out) {
  return {{"data", data("bikeshare_sample.csv")},
          {"kg", data("demo.kg")},
          {"schema", data("bikeshare_schema.json")},
          {"target", "rentals"},
          {"episodes", 2},
          {"m", 2},
          {"out", out.string()}};
}

} // namespace

TEST_CASE("version and status names") {
  CHECK(std::string(kgfe_version()) == "1.0.0");
  CHECK(std::string(kgfe_status_name(KGFE_E_KG_SYNTAX)) == "kg_syntax");
  CHECK(std::string(kgfe_status_name(KGFE_OK)) == "ok");
}

TEST_CASE("knowledge base handles") {
  kgfe_kb *kb = nullptr;
  REQUIRE(kgfe_kb_load(data("demo.kg").c_str(), &kb) == KGFE_OK);
  char *summary = nullptr;
  REQUIRE(kgfe_kb_summary_json(kb, &summary) == KGFE_OK);
  auto j = json::parse(take(summary));
  CHECK(j["concepts"].get<int>() > 0);
  char *text = nullptr;
  REQUIRE(kgfe_kb_print(kb, &text) == KGFE_OK);
  auto printed = take(text);
  kgfe_kb_free(kb);

  kgfe_kb *again = nullptr;
  REQUIRE(kgfe_kb_parse(printed.c_str(), &again) == KGFE_OK);
  kgfe_kb_free(again);

  kgfe_kb *bad = nullptr;
  CHECK(kgfe_kb_parse("concept\n", &bad) == KGFE_E_KG_SYNTAX);
  CHECK(bad == nullptr);
  CHECK(std::string(kgfe_last_error()).find("1:") != std::string::npos);
  CHECK(kgfe_kb_parse(nullptr, &bad) == KGFE_E_INVALID_ARGUMENT);
}

TEST_CASE("dataset handles") {
  kgfe_dataset *d = nullptr;
  REQUIRE(kgfe_dataset_load_csv(data("bikeshare_sample.csv").c_str(), "rentals", "auto", &d) == KGFE_OK);
  CHECK(kgfe_dataset_rows(d) == 600);
  CHECK(kgfe_dataset_features(d) == 12);
  kgfe_dataset_free(d);
  CHECK(kgfe_dataset_load_csv(data("bikeshare_sample.csv").c_str(), "nope", nullptr, &d) == KGFE_E_TARGET_MISSING);
  CHECK(std::string(kgfe_last_error()).find("nope") != std::string::npos);
  CHECK(kgfe_dataset_load_csv("/nonexistent.csv", "y", nullptr, &d) == KGFE_E_IO);
}

TEST_CASE("search space size through the C API") {
  uint64_t counts[] = {2, 1};
  char *dec = nullptr;
  uint64_t value = 0;
  int fits = 0;
  REQUIRE(kgfe_space_size(2, counts, 2, &dec, &value, &fits) == KGFE_OK);
  CHECK(take(dec) == "6");
  CHECK(value == 6);
  CHECK(fits == 1);
  uint64_t quaternary[] = {0, 0, 0, 1};
  REQUIRE(kgfe_space_size(10'000'000, quaternary, 4, &dec, &value, &fits) == KGFE_OK);
  CHECK(take(dec) == "9999994000001099999940000000");
  CHECK(fits == 0);
  REQUIRE(kgfe_catalog_space_size(2, &dec) == KGFE_OK);
  CHECK_FALSE(take(dec).empty());
  char *list = nullptr;
  REQUIRE(kgfe_list_transforms(&list) == KGFE_OK);
  CHECK(json::parse(take(list)).size() == 24);
}

TEST_CASE("config validation") {
  char *eff = nullptr;
  auto cfg = demo_config("unused");
  REQUIRE(kgfe_validate_config(cfg.dump().c_str(), &eff) == KGFE_OK);
  auto j = json::parse(take(eff));
  CHECK(j["lambda"] == 0.7);
  CHECK(j["episodes"] == 2);
  cfg["bogus"] = 1;
  CHECK(kgfe_validate_config(cfg.dump().c_str(), &eff) == KGFE_E_CONFIG);
  CHECK(std::string(kgfe_last_error()).find("bogus") != std::string::npos);
  cfg.erase("bogus");
  cfg["lambda"] = 2.0;
  CHECK(kgfe_validate_config(cfg.dump().c_str(), &eff) == KGFE_E_CONFIG);
  CHECK(kgfe_validate_config("{not json", &eff) == KGFE_E_CONFIG);
}

TEST_CASE("end-to-end run and feature scoring") {
  auto out = fs::temp_directory_path() / "kgfe_capi_run";
  fs::remove_all(out);
  char *report = nullptr;
  REQUIRE(kgfe_run(demo_config(out).dump().c_str(), &report) == KGFE_OK);
  auto r = json::parse(take(report));
  CHECK(r["objective"]["value"].get<double>() >= 0.7 * r["exploited"]["mean"].get<double>());
  for (auto *f : {"report.json", "augmented.csv", "decomp.dot", "decomp.json", "importance.svg"})
    CHECK(fs::exists(out / f));

  double score = -1;
  REQUIRE(kgfe_score_feature(demo_config(out).dump().c_str(), "add(temp_c,humidity)", &score) == KGFE_OK);
  CHECK(score == 0.0);
  REQUIRE(kgfe_score_feature(demo_config(out).dump().c_str(), "is_rush_hour(datetime)", &score) == KGFE_OK);
  CHECK(score == doctest::Approx(0.95));
  for (auto &f : r["interpretability"]["features"]) {
    double g = -1;
    auto name = f["name"].get<std::string>();
    REQUIRE(kgfe_score_feature_graph((out / "decomp.json").string().c_str(), name.c_str(), &g) == KGFE_OK);
    CHECK(g == doctest::Approx(f["score"].get<double>()));
  }
  fs::remove_all(out);
}

TEST_CASE("the demo search improves on the raw baseline") {
  auto out = fs::temp_directory_path() / "kgfe_capi_demo";
  fs::remove_all(out);
  auto cfg = demo_config(out);
  cfg.erase("episodes");
  cfg.erase("m");
  char *report = nullptr;
  REQUIRE(kgfe_run(cfg.dump().c_str(), &report) == KGFE_OK);
  auto r = json::parse(take(report));
  CHECK(r["final"]["mean"].get<double>() >= r["base"]["mean"].get<double>());
  fs::remove_all(out);
}

TEST_CASE("zero episodes reports the exploited baseline") {
  auto out = fs::temp_directory_path() / "kgfe_capi_zero";
  fs::remove_all(out);
  auto cfg = demo_config(out);
  cfg["episodes"] = 0;
  char *report = nullptr;
  REQUIRE(kgfe_run(cfg.dump().c_str(), &report) == KGFE_OK);
  auto r = json::parse(take(report));
  CHECK(r["pipeline"].empty());
  CHECK(r["final"]["per_fold"] == r["exploited"]["per_fold"]);
  fs::remove_all(out);
}

TEST_CASE("failed runs leave no outputs") {
  auto out = fs::temp_directory_path() / "kgfe_capi_fail";
  fs::remove_all(out);
  auto cfg = demo_config(out);
  cfg["target"] = "missing_column";
  char *report = nullptr;
  CHECK(kgfe_run(cfg.dump().c_str(), &report) == KGFE_E_TARGET_MISSING);
  CHECK(report == nullptr);
  CHECK_FALSE(fs::exists(out / "report.json"));
}

TEST_CASE("oracle refuses oversized budgets") {
  auto cfg = demo_config("unused");
  char *res = nullptr;
  CHECK(kgfe_oracle(cfg.dump().c_str(), 2, &res) == KGFE_E_BUDGET_EXCEEDED);
  CHECK(kgfe_oracle(cfg.dump().c_str(), 3, &res) == KGFE_E_INVALID_ARGUMENT);
}
