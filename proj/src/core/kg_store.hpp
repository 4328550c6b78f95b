#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tabular.hpp"
#include "units.hpp"

namespace kgfe {

struct Transform;

inline constexpr const char *kUnknownConcept = "Unknown";

struct UnitDecl {
  std::string id;
  std::string dim;
  bool operator==(const UnitDecl &) const = default;
};

struct ColumnMapping {
  std::string pattern;
  std::string concept_name;
  std::optional<std::string> unit;
  bool operator==(const ColumnMapping &) const = default;
};

// A derivation product expression: either a head-concept leaf or a catalog
// transform applied to sub-expressions. triple_lookup carries its predicate
// in `param` and always applies to the first head.
struct DeriveExpr {
  std::string transform; // empty for a leaf
  std::string param;
  std::string concept_name; // leaf only
  std::vector<DeriveExpr> args;
  bool operator==(const DeriveExpr &) const = default;
};

struct DerivationProduct {
  std::string concept_name;
  DeriveExpr expr;
  bool operator==(const DerivationProduct &) const = default;
};

struct Guard {
  enum class Kind { dtype_is, unit_is };
  Kind kind;
  std::string arg;
  bool operator==(const Guard &) const = default;
};

struct DerivationRule {
  std::vector<std::string> heads;
  std::vector<DerivationProduct> products;
  std::vector<Guard> guards;
  bool operator==(const DerivationRule &) const = default;
};

struct OperandPredicate {
  enum class Kind { units_differ, unit_is, concept_is };
  Kind kind;
  std::string arg;
  bool operator==(const OperandPredicate &) const = default;
};

// A construction matching `pattern` whose operands satisfy every predicate
// yields a non-interpretable feature.
struct InterpRule {
  std::string pattern; // transform id or "class:<name>"
  std::vector<OperandPredicate> predicates;
  bool operator==(const InterpRule &) const = default;
};

struct Triple {
  std::string subject;
  std::string predicate;
  std::string object;
  bool operator==(const Triple &) const = default;
};

class KnowledgeBase {
public:
  std::vector<std::string> concepts;
  std::vector<UnitDecl> units;
  std::vector<ColumnMapping> mappings;
  std::vector<DerivationRule> derivations;
  std::vector<InterpRule> interp_rules;
  std::vector<Triple> triples;
  std::map<std::string, double> interp_weights; // explicit overrides only

  bool has_concept(std::string_view id) const;
  const UnitDecl *find_unit(std::string_view id) const;

  // Inter(t): the explicit weight, else the class default.
  double transform_weight(std::string_view transform) const;
  // Weight of every catalog transform, for report echo and graph scoring.
  std::map<std::string, double> resolved_weights() const;

  // Declared dimension groups (sorted) followed by the reserved groups
  // dimensionless, derived and unknown.
  std::vector<std::string> dimension_groups() const;
  std::string dimension_of(const Unit &u) const;

  // Objects of triples with exactly this subject and predicate, file order.
  std::vector<std::string> lookup_related(std::string_view entity,
                                          std::string_view predicate) const;
  // First object whose subject equals `label` case-insensitively after trimming.
  std::optional<std::string> lookup_by_label(std::string_view label,
                                             std::string_view predicate) const;

  bool non_interpretable(const Transform &t, std::span<const Column *const> operands) const;

  bool operator==(const KnowledgeBase &) const = default;
};

KnowledgeBase parse_kg(const std::string &path);
KnowledgeBase parse_kg_text(std::string_view text, const std::string &source = "<kg>");
std::string print_kg(const KnowledgeBase &kb);
std::string print_expr(const DeriveExpr &e);

// Annotates each non-target column that has no concept yet.
Dataset map_columns(const KnowledgeBase &kb, const Dataset &d);

} // namespace kgfe
