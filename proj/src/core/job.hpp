#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reasoner.hpp"
#include "search_env.hpp"

namespace kgfe {

struct JobConfig {
  std::string data;
  std::string kg;     // empty: no knowledge base
  std::string schema; // optional schema-hints JSON file
  std::string target;
  std::optional<Task> task;
  std::optional<LearnerKind> learner_kind;
  Learner learner; // hyperparameters; kind comes from learner_kind or the task
  std::string out = "out";
  size_t exploit_depth = 3;
  double unknown_score = 0.8;
  size_t importance_repeats = 5;
  SearchConfig search;
};

// Unknown keys and ill-typed values raise config_invalid. Keys absent from
// `j` keep their value from `base`.
JobConfig config_from_json(const nlohmann::json &j, JobConfig base = {});
// Every effective parameter, including defaults; feeding it back to
// config_from_json reproduces the same job.
nlohmann::json config_to_json(const JobConfig &cfg);
void validate(const JobConfig &cfg);

// Files written into cfg.out by run().
inline const std::vector<std::string> kOutputFiles = {
    "report.json", "augmented.csv", "decomp.dot", "decomp.json",
    "importance.svg", "training_log.json", "q_network.smfe", "timings.json"};

// Executes the whole job and writes its outputs. On failure every output
// file is removed and the error rethrown. Returns report.json's content.
std::string run(const JobConfig &cfg);

struct Prepared {
  KnowledgeBase kb;
  Dataset raw;       // loaded and column-mapped
  ExploitResult exploited;
};
Prepared prepare(const JobConfig &cfg);

// Exhaustive search result as JSON.
std::string run_oracle(const JobConfig &cfg, size_t depth);

// Interpretability of a feature expression such as "div(weight,square(height))",
// built on top of the exploited dataset of `cfg`.
double score_feature(const JobConfig &cfg, const std::string &expression);
// Same, read from an exported decomposition graph.
double score_feature_in_graph(const std::string &graph_json, const std::string &name);

std::string render_importance_svg(const std::vector<Importance> &ranking,
                                  const std::vector<bool> &generated);
inline constexpr const char *kGeneratedColor = "#1f77b4";
inline constexpr const char *kKnownColor = "#ff7f0e";

nlohmann::json kb_summary(const KnowledgeBase &kb);
nlohmann::json catalog_json();

} // namespace kgfe
