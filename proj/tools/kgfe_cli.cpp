// Command-line front end over the kgfe C API.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "kgfe/kgfe.h"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0, kExitRuntime = 1, kExitConfig = 2;

int exit_code(kgfe_status s) {
  switch (s) {
  case KGFE_OK: return kExitOk;
  case KGFE_E_CONFIG:
  case KGFE_E_INVALID_ARGUMENT:
  case KGFE_E_TARGET_MISSING:
  case KGFE_E_KG_SYNTAX:
  case KGFE_E_KG_UNKNOWN_REFERENCE:
  case KGFE_E_KG_DUPLICATE:
  case KGFE_E_KG_SCORE_RANGE:
  case KGFE_E_AMBIGUOUS_MAPPING:
  case KGFE_E_BUDGET_EXCEEDED: return kExitConfig;
  default: return kExitRuntime;
  }
}

int fail(kgfe_status s) {
  std::cerr << "error (" << kgfe_status_name(s) << "): " << kgfe_last_error() << "\n";
  return exit_code(s);
}

// Owns a string returned by the library.
struct Text {
  char *p = nullptr;
  ~Text() { kgfe_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct Flags {
  std::string config;
  std::optional<std::string> data, kg, schema, target, task, learner, out;
  std::optional<size_t> k, episodes, m, top_k, bootstrap_rows;
  std::optional<uint64_t> seed;
  std::optional<double> lambda;
  bool drop_noninterp = false;
};

std::optional<json> build_config(const Flags &f, int &code) {
  json cfg = json::object();
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) {
      std::cerr << "error (config_invalid): cannot open config file " << f.config << "\n";
      code = kExitConfig;
      return std::nullopt;
    }
    try {
      cfg = json::parse(in);
    } catch (const json::exception &e) {
      std::cerr << "error (config_invalid): " << f.config << ": " << e.what() << "\n";
      code = kExitConfig;
      return std::nullopt;
    }
    if (!cfg.is_object()) {
      std::cerr << "error (config_invalid): config file must hold a JSON object\n";
      code = kExitConfig;
      return std::nullopt;
    }
  }
  auto set = [&](const char *key, const auto &opt) {
    if (opt) cfg[key] = *opt;
  };
  set("data", f.data);
  set("kg", f.kg);
  set("schema", f.schema);
  set("target", f.target);
  set("task", f.task);
  set("learner", f.learner);
  set("out", f.out);
  set("k", f.k);
  set("episodes", f.episodes);
  set("m", f.m);
  set("top_k", f.top_k);
  set("bootstrap_rows", f.bootstrap_rows);
  set("seed", f.seed);
  set("lambda", f.lambda);
  if (f.drop_noninterp) cfg["drop_noninterp"] = true;
  return cfg;
}

int list_transforms() {
  Text t;
  if (auto s = kgfe_list_transforms(&t.p)) return fail(s);
  auto j = json::parse(t.str());
  std::printf("%-16s %-12s %-9s %-8s %s\n", "id", "arity", "class", "weight", "agent");
  for (auto &e : j)
    std::printf("%-16s %-12s %-9s %-8.2f %s\n", e["id"].get<std::string>().c_str(),
                e["arity"].get<std::string>().c_str(), e["class"].get<std::string>().c_str(),
                e["default_weight"].get<double>(), e["agent_action"].get<bool>() ? "yes" : "no");
  return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Knowledge-guided automated feature engineering"};
  app.fallthrough();
  app.set_version_flag("--version", std::string(kgfe_version()));
  Flags f;
  bool list = false;
  app.add_option("--config", f.config, "JSON job configuration (flags override it)");
  app.add_option("--data", f.data, "input CSV");
  app.add_option("--kg", f.kg, "knowledge-base DSL file");
  app.add_option("--schema", f.schema, "schema hints JSON");
  app.add_option("--target", f.target, "target column");
  app.add_option("--task", f.task, "regression, classification or auto");
  app.add_option("--learner", f.learner, "decision_tree, linear_regression_ridge, logistic_regression or auto");
  app.add_option("--k", f.k, "cross-validation folds");
  app.add_option("--lambda", f.lambda, "performance weight in [0,1]");
  app.add_option("--episodes", f.episodes, "training episodes");
  app.add_option("--m", f.m, "transformations per episode");
  app.add_option("--top-k", f.top_k, "new features kept per action");
  app.add_option("--seed", f.seed, "random seed");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--bootstrap-rows", f.bootstrap_rows, "row cap for reward evaluation (0 disables)");
  app.add_flag("--drop-noninterp", f.drop_noninterp, "discard non-interpretable candidates");
  app.add_flag("--list-transforms", list, "print the transform catalog and exit");

  auto *score = app.add_subcommand("score-feature", "interpretability of a feature expression");
  std::string feature, graph;
  score->add_option("feature", feature, "feature name, e.g. div(weight,square(height))")->required();
  score->add_option("--graph", graph, "decomp.json from a previous run");

  auto *list_cmd = app.add_subcommand("list-transforms", "print the transform catalog");

  auto *check = app.add_subcommand("check-kg", "parse and link-check a knowledge base");
  std::string kg_path;
  check->add_option("path", kg_path, "knowledge-base file")->required();

  auto *space = app.add_subcommand("space-size", "size of the candidate space for p features");
  uint64_t p = 0;
  std::optional<uint64_t> unary, binary, ternary, quaternary;
  space->add_option("--p", p, "feature count")->required();
  space->add_option("--unary", unary, "one-operand transforms");
  space->add_option("--binary", binary, "two-operand transforms");
  space->add_option("--ternary", ternary, "three-operand transforms");
  space->add_option("--quaternary", quaternary, "four-operand transforms");

  auto *oracle = app.add_subcommand("oracle", "exhaustive search over short pipelines");
  unsigned depth = 1;
  oracle->add_option("--depth", depth, "pipeline length, at most 2");
  app.require_subcommand(0, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitConfig;
  }

  if (list || list_cmd->parsed()) return list_transforms();

  if (check->parsed()) {
    kgfe_kb *kb = nullptr;
    if (auto s = kgfe_kb_load(kg_path.c_str(), &kb)) return fail(s);
    Text t;
    auto s = kgfe_kb_summary_json(kb, &t.p);
    kgfe_kb_free(kb);
    if (s) return fail(s);
    auto j = json::parse(t.str());
    std::cout << "OK: " << j["concepts"] << " concepts, " << j["units"] << " units, " << j["mappings"]
              << " mappings, " << j["derivation_rules"] << " derivation rules, "
              << j["interpretability_rules"] << " interpretability rules, " << j["triples"]
              << " triples\n";
    return kExitOk;
  }

  if (space->parsed()) {
    Text t;
    kgfe_status s;
    if (!unary && !binary && !ternary && !quaternary) {
      s = kgfe_catalog_space_size(p, &t.p);
    } else {
      uint64_t counts[4] = {unary.value_or(0), binary.value_or(0), ternary.value_or(0), quaternary.value_or(0)};
      s = kgfe_space_size(p, counts, 4, &t.p, nullptr, nullptr);
    }
    if (s) return fail(s);
    std::cout << t.str() << "\n";
    return kExitOk;
  }

  if (score->parsed() && !graph.empty()) {
    double v = 0;
    if (auto s = kgfe_score_feature_graph(graph.c_str(), feature.c_str(), &v)) return fail(s);
    std::cout << json(v).dump() << "\n"; // shortest round-trip form
    return kExitOk;
  }

  int code = kExitOk;
  auto cfg = build_config(f, code);
  if (!cfg) return code;
  std::string cfg_text = cfg->dump();

  if (score->parsed()) {
    double v = 0;
    if (auto s = kgfe_score_feature(cfg_text.c_str(), feature.c_str(), &v)) return fail(s);
    std::cout << json(v).dump() << "\n"; // shortest round-trip form
    return kExitOk;
  }

  if (oracle->parsed()) {
    Text t;
    if (auto s = kgfe_oracle(cfg_text.c_str(), depth, &t.p)) return fail(s);
    std::cout << t.str() << "\n";
    return kExitOk;
  }

  Text report;
  if (auto s = kgfe_run(cfg_text.c_str(), &report.p)) return fail(s);
  auto r = json::parse(report.str());
  auto metric = r["final"]["metric"].get<std::string>();
  std::printf("%s base %.4f  exploited %.4f  final %.4f\n", metric.c_str(), r["base"]["mean"].get<double>(),
              r["exploited"]["mean"].get<double>(), r["final"]["mean"].get<double>());
  std::printf("objective %.4f  mean interpretability %.4f  pipeline steps %zu\n",
              r["objective"]["value"].get<double>(), r["interpretability"]["mean"].get<double>(),
              r["pipeline"].size());
  std::cout << "outputs written to " << r["config"]["out"].get<std::string>() << "\n";
  return kExitOk;
}
