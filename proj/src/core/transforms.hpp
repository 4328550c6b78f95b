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

class KnowledgeBase;

enum class Arity { unary, binary, aggregation, date, geo, lookup };
enum class TransformClass { arith, unary_math, logical, agg, date, geo, encoding, lookup };

const char *to_string(Arity a);
const char *to_string(TransformClass c);

struct Transform {
  std::string id;
  Arity arity;
  TransformClass cls;
  std::vector<std::vector<DType>> inputs; // accepted dtypes per operand
  DType output;
  std::string unit_law;

  size_t operand_count() const { return inputs.size(); }
  bool accepts(size_t operand, DType d) const;
};

class TransformCatalog {
public:
  explicit TransformCatalog(std::vector<Transform> transforms);

  const std::vector<Transform> &transforms() const { return transforms_; }
  const Transform *find(std::string_view id) const;
  const Transform &at(std::string_view id) const;
  // Member ids of a class name ("arith", "agg", ...), empty if unknown.
  std::vector<std::string> class_members(std::string_view cls) const;
  // Transforms the agent may pick, in catalog order (excludes lookups).
  std::vector<const Transform *> actions() const;

  // Interpretability weight used when the knowledge base sets none.
  static double default_weight(TransformClass cls);

private:
  std::vector<Transform> transforms_;
};

const TransformCatalog &builtin_catalog();

struct OperandTuple {
  std::vector<std::string> operands;
  bool non_interpretable = false;
};

// Ordered operand tuples of distinct features valid for `t`, in column order.
// With check_dtypes=false every i-permutation of the features is returned.
std::vector<OperandTuple> applicable_operands(const Transform &t, const Dataset &d,
                                              const KnowledgeBase *kb,
                                              bool check_dtypes = true);

Unit output_unit(const Transform &t, std::span<const Unit> operand_units);

// Never throws on cell-level failures: undefined results become absent cells.
// `param` is the predicate for triple_lookup. Returns one column except for
// one_hot, which returns one boolean column per kept category.
std::vector<Column> apply(const Transform &t, std::span<const Column *const> operands,
                          const KnowledgeBase *kb = nullptr, std::string_view param = {});

inline constexpr size_t kOneHotMaxCategories = 20;
inline constexpr int kRushMorningStart = 7, kRushMorningEnd = 10;
inline constexpr int kRushEveningStart = 16, kRushEveningEnd = 19;
inline constexpr double kEarthRadiusKm = 6371.0;

std::string feature_name(std::string_view transform, std::span<const std::string> operands,
                         std::string_view param = {});

struct ParsedName {
  std::string transform;
  std::string param;
  std::vector<std::string> operands;
  std::string selector; // one_hot category, e.g. "Paris" in one_hot(city)[Paris]
};

std::optional<ParsedName> parse_feature_name(std::string_view name);

} // namespace kgfe
