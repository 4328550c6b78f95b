#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kgfe {

// Product of named base units with integer exponents, e.g. kilogram/metre^2.
// An empty factor list is the dimensionless unit.
class UnitExpr {
public:
  UnitExpr() = default;

  static UnitExpr base(std::string name);
  static UnitExpr dimensionless() { return {}; }
  static std::optional<UnitExpr> parse(std::string_view text);

  UnitExpr operator*(const UnitExpr &other) const;
  UnitExpr inverse() const;
  UnitExpr pow(int exponent) const;
  // Square root, only when every exponent is even.
  std::optional<UnitExpr> sqrt() const;

  bool is_dimensionless() const { return factors_.empty(); }
  // Base unit name when this is exactly one factor with exponent 1.
  std::optional<std::string> as_base() const;
  const std::vector<std::pair<std::string, int>> &factors() const {
    return factors_;
  }

  std::string str() const;

  bool operator==(const UnitExpr &) const = default;

private:
  void normalize();

  std::vector<std::pair<std::string, int>> factors_; // sorted by name
};

// Absent means the unit is unknown (unannotated, or an invalid combination).
using Unit = std::optional<UnitExpr>;

inline std::string unit_str(const Unit &u) { return u ? u->str() : ""; }

} // namespace kgfe
