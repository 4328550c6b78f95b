#pragma once

#include <span>
#include <string>
#include <vector>

#include "decomp.hpp"
#include "kg_store.hpp"
#include "tabular.hpp"
#include "transforms.hpp"

namespace kgfe {

struct InferenceStep {
  size_t rule = 0; // index into KnowledgeBase::derivations
  std::vector<std::string> sources; // one column per head concept
  std::vector<std::string> produced;
};

struct InferenceTrace {
  std::vector<InferenceStep> steps;
  std::vector<std::string> warnings;
  size_t depth_reached = 0;
};

struct ExploitOptions {
  size_t max_depth = 3;
  double unknown_score = 0.8; // seed score of raw columns without a KG concept
};

struct ExploitResult {
  Dataset data;
  InferenceTrace trace;
  DecompositionGraph graph;
};

// Forward-chains the derivation rules over a column-mapped dataset. Every
// feature ends up as a seed node of the returned graph.
ExploitResult exploit(const Dataset &d, const KnowledgeBase &kb, const ExploitOptions &opts = {});

// Recomputes the columns of a trace step from `d` (which must contain the
// step's source columns).
std::vector<Column> replay_step(const Dataset &d, const KnowledgeBase &kb, const InferenceStep &step);

enum class Verdict { interpretable, non_interpretable };

Verdict check_interpretability_rules(const KnowledgeBase &kb, const std::string &transform,
                                     std::span<const Column *const> operands);

} // namespace kgfe
