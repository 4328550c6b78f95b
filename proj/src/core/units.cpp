#include "units.hpp"

#include <algorithm>
#include <charconv>
#include <map>

namespace kgfe {

UnitExpr UnitExpr::base(std::string name) {
  UnitExpr u;
  u.factors_.emplace_back(std::move(name), 1);
  return u;
}

void UnitExpr::normalize() {
  std::map<std::string, int> acc;
  for (auto &[name, exp] : factors_) acc[name] += exp;
  factors_.clear();
  for (auto &[name, exp] : acc)
    if (exp != 0) factors_.emplace_back(name, exp);
}

UnitExpr UnitExpr::operator*(const UnitExpr &other) const {
  UnitExpr out = *this;
  out.factors_.insert(out.factors_.end(), other.factors_.begin(),
                      other.factors_.end());
  out.normalize();
  return out;
}

UnitExpr UnitExpr::inverse() const { return pow(-1); }

UnitExpr UnitExpr::pow(int exponent) const {
  UnitExpr out = *this;
  for (auto &f : out.factors_) f.second *= exponent;
  out.normalize();
  return out;
}

std::optional<UnitExpr> UnitExpr::sqrt() const {
  UnitExpr out = *this;
  for (auto &f : out.factors_) {
    if (f.second % 2 != 0) return std::nullopt;
    f.second /= 2;
  }
  return out;
}

std::optional<std::string> UnitExpr::as_base() const {
  if (factors_.size() == 1 && factors_[0].second == 1) return factors_[0].first;
  return std::nullopt;
}

std::string UnitExpr::str() const {
  if (factors_.empty()) return "1";
  std::string num, den;
  auto term = [](const std::string &name, int exp) {
    return exp == 1 ? name : name + "^" + std::to_string(exp);
  };
  for (auto &[name, exp] : factors_) {
    if (exp > 0) {
      if (!num.empty()) num += "*";
      num += term(name, exp);
    } else {
      den += "/" + term(name, -exp);
    }
  }
  if (num.empty()) num = "1";
  return num + den;
}

std::optional<UnitExpr> UnitExpr::parse(std::string_view text) {
  if (text.empty()) return std::nullopt;
  if (text == "1") return dimensionless();
  UnitExpr out;
  int sign = 1;
  size_t i = 0;
  while (i <= text.size()) {
    size_t j = text.find_first_of("*/", i);
    if (j == std::string_view::npos) j = text.size();
    std::string_view tok = text.substr(i, j - i);
    if (tok.empty()) return std::nullopt;
    int exp = 1;
    if (auto caret = tok.find('^'); caret != std::string_view::npos) {
      auto digits = tok.substr(caret + 1);
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), exp);
      if (ec != std::errc() || p != digits.data() + digits.size()) return std::nullopt;
      tok = tok.substr(0, caret);
    }
    if (tok != "1") out.factors_.emplace_back(std::string(tok), sign * exp);
    if (j == text.size()) break;
    sign = text[j] == '/' ? -1 : 1;
    i = j + 1;
  }
  out.normalize();
  return out;
}

} // namespace kgfe
