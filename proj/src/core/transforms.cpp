#include "transforms.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <set>
#include <unordered_map>

#include "error.hpp"
#include "kg_store.hpp"

namespace kgfe {

const char *to_string(Arity a) {
  switch (a) {
  case Arity::unary: return "unary";
  case Arity::binary: return "binary";
  case Arity::aggregation: return "aggregation";
  case Arity::date: return "date";
  case Arity::geo: return "geo";
  case Arity::lookup: return "lookup";
  }
  return "unary";
}

const char *to_string(TransformClass c) {
  switch (c) {
  case TransformClass::arith: return "arith";
  case TransformClass::unary_math: return "unary";
  case TransformClass::logical: return "logical";
  case TransformClass::agg: return "agg";
  case TransformClass::date: return "date";
  case TransformClass::geo: return "geo";
  case TransformClass::encoding: return "encoding";
  case TransformClass::lookup: return "lookup";
  }
  return "unary";
}

bool Transform::accepts(size_t operand, DType d) const {
  const auto &allowed = inputs.at(operand);
  return std::find(allowed.begin(), allowed.end(), d) != allowed.end();
}

TransformCatalog::TransformCatalog(std::vector<Transform> transforms)
    : transforms_(std::move(transforms)) {
  std::set<std::string> ids;
  for (auto &t : transforms_)
    if (!ids.insert(t.id).second)
      throw Error(ErrorCode::internal, "duplicate transform id " + t.id);
}

const Transform *TransformCatalog::find(std::string_view id) const {
  for (auto &t : transforms_)
    if (t.id == id) return &t;
  return nullptr;
}

const Transform &TransformCatalog::at(std::string_view id) const {
  if (auto *t = find(id)) return *t;
  throw Error(ErrorCode::invalid_argument, "unknown transform '" + std::string(id) + "'");
}

std::vector<std::string> TransformCatalog::class_members(std::string_view cls) const {
  std::vector<std::string> out;
  for (auto &t : transforms_)
    if (cls == to_string(t.cls)) out.push_back(t.id);
  return out;
}

std::vector<const Transform *> TransformCatalog::actions() const {
  std::vector<const Transform *> out;
  for (auto &t : transforms_)
    if (t.arity != Arity::lookup) out.push_back(&t);
  return out;
}

double TransformCatalog::default_weight(TransformClass cls) {
  switch (cls) {
  case TransformClass::arith:
  case TransformClass::date:
  case TransformClass::geo:
  case TransformClass::encoding:
  case TransformClass::lookup: return 0.95;
  case TransformClass::unary_math:
  case TransformClass::logical: return 0.90;
  case TransformClass::agg: return 0.85;
  }
  return 0.90;
}

const TransformCatalog &builtin_catalog() {
  static const TransformCatalog catalog = [] {
    using D = DType;
    const std::vector<D> num{D::numeric};
    const std::vector<D> cat{D::categorical};
    const std::vector<D> dt{D::datetime};
    const std::vector<D> boolean{D::boolean};
    std::vector<Transform> ts;
    auto add = [&](std::string id, Arity a, TransformClass c,
                   std::vector<std::vector<D>> in, D out, std::string law) {
      ts.push_back(Transform{std::move(id), a, c, std::move(in), out, std::move(law)});
    };
    using A = Arity;
    using C = TransformClass;
    add("log", A::unary, C::unary_math, {num}, D::numeric, "dimensionless");
    add("sqrt", A::unary, C::unary_math, {num}, D::numeric, "u^(1/2), unknown if any exponent is odd");
    add("square", A::unary, C::unary_math, {num}, D::numeric, "u^2");
    add("reciprocal", A::unary, C::unary_math, {num}, D::numeric, "u^-1");
    add("one_hot", A::unary, C::encoding, {cat}, D::boolean, "dimensionless");
    add("add", A::binary, C::arith, {num, num}, D::numeric, "u if both operands share unit u, else unknown");
    add("sub", A::binary, C::arith, {num, num}, D::numeric, "u if both operands share unit u, else unknown");
    add("mul", A::binary, C::arith, {num, num}, D::numeric, "u*v");
    add("div", A::binary, C::arith, {num, num}, D::numeric, "u/v");
    add("and", A::binary, C::logical, {boolean, boolean}, D::boolean, "dimensionless");
    add("or", A::binary, C::logical, {boolean, boolean}, D::boolean, "dimensionless");
    add("group_by_mean", A::aggregation, C::agg, {cat, num}, D::numeric, "unit of the value operand");
    add("group_by_sum", A::aggregation, C::agg, {cat, num}, D::numeric, "unit of the value operand");
    add("group_by_min", A::aggregation, C::agg, {cat, num}, D::numeric, "unit of the value operand");
    add("group_by_max", A::aggregation, C::agg, {cat, num}, D::numeric, "unit of the value operand");
    add("group_by_count", A::aggregation, C::agg, {cat}, D::numeric, "dimensionless");
    add("extract_day", A::date, C::date, {dt}, D::numeric, "dimensionless");
    add("extract_month", A::date, C::date, {dt}, D::numeric, "dimensionless");
    add("extract_year", A::date, C::date, {dt}, D::numeric, "dimensionless");
    add("is_weekend", A::date, C::date, {dt}, D::boolean, "dimensionless");
    add("is_rush_hour", A::date, C::date, {dt}, D::boolean, "dimensionless");
    add("time_diff_hours", A::date, C::date, {dt, dt}, D::numeric, "hour");
    add("haversine_km", A::geo, C::geo, {{D::geo_lat}, {D::geo_lon}, {D::geo_lat}, {D::geo_lon}},
        D::numeric, "kilometre");
    add("triple_lookup", A::lookup, C::lookup, {cat}, D::categorical, "unknown");
    return TransformCatalog(std::move(ts));
  }();
  return catalog;
}

namespace {

void permutations(size_t p, size_t len, std::vector<size_t> &cur, std::vector<uint8_t> &used,
                  const std::function<bool(size_t pos, size_t idx)> &ok,
                  std::vector<std::vector<size_t>> &out) {
  if (cur.size() == len) {
    out.push_back(cur);
    return;
  }
  for (size_t i = 0; i < p; ++i) {
    if (used[i] || !ok(cur.size(), i)) continue;
    used[i] = 1;
    cur.push_back(i);
    permutations(p, len, cur, used, ok, out);
    cur.pop_back();
    used[i] = 0;
  }
}

} // namespace

std::vector<OperandTuple> applicable_operands(const Transform &t, const Dataset &d,
                                              const KnowledgeBase *kb, bool check_dtypes) {
  auto feats = d.features();
  std::vector<std::vector<size_t>> index_tuples;
  size_t arity = t.operand_count();

  if (check_dtypes && t.arity == Arity::geo) {
    // Pair the i-th latitude with the i-th longitude to form points.
    std::vector<size_t> lats, lons;
    for (size_t i = 0; i < feats.size(); ++i) {
      if (feats[i]->dtype == DType::geo_lat) lats.push_back(i);
      if (feats[i]->dtype == DType::geo_lon) lons.push_back(i);
    }
    size_t points = std::min(lats.size(), lons.size());
    for (size_t a = 0; a < points; ++a)
      for (size_t b = 0; b < points; ++b)
        if (a != b) index_tuples.push_back({lats[a], lons[a], lats[b], lons[b]});
  } else if (arity <= feats.size()) {
    std::vector<size_t> cur;
    std::vector<uint8_t> used(feats.size(), 0);
    auto ok = [&](size_t pos, size_t idx) {
      return !check_dtypes || t.accepts(pos, feats[idx]->dtype);
    };
    permutations(feats.size(), arity, cur, used, ok, index_tuples);
  }

  std::vector<OperandTuple> out;
  out.reserve(index_tuples.size());
  for (auto &idx : index_tuples) {
    OperandTuple tuple;
    std::vector<const Column *> cols;
    for (size_t i : idx) {
      tuple.operands.push_back(feats[i]->name);
      cols.push_back(feats[i]);
    }
    if (kb) tuple.non_interpretable = kb->non_interpretable(t, cols);
    out.push_back(std::move(tuple));
  }
  return out;
}

Unit output_unit(const Transform &t, std::span<const Unit> u) {
  const std::string &id = t.id;
  if (id == "sqrt") return u[0] ? u[0]->sqrt() : std::nullopt;
  if (id == "square") return u[0] ? Unit(u[0]->pow(2)) : std::nullopt;
  if (id == "reciprocal") return u[0] ? Unit(u[0]->inverse()) : std::nullopt;
  if (id == "add" || id == "sub") return (u[0] && u[1] && *u[0] == *u[1]) ? u[0] : std::nullopt;
  if (id == "mul") return (u[0] && u[1]) ? Unit(*u[0] * *u[1]) : std::nullopt;
  if (id == "div") return (u[0] && u[1]) ? Unit(*u[0] * u[1]->inverse()) : std::nullopt;
  if (t.cls == TransformClass::agg) return id == "group_by_count" ? Unit(UnitExpr()) : u[1];
  if (id == "time_diff_hours") return UnitExpr::base("hour");
  if (id == "haversine_km") return UnitExpr::base("kilometre");
  if (id == "triple_lookup") return std::nullopt;
  return UnitExpr::dimensionless();
}

std::string feature_name(std::string_view transform, std::span<const std::string> operands,
                         std::string_view param) {
  std::string out(transform);
  if (!param.empty()) {
    out += ':';
    out += param;
  }
  out += '(';
  for (size_t i = 0; i < operands.size(); ++i) {
    if (i) out += ',';
    out += operands[i];
  }
  return out + ")";
}

std::optional<ParsedName> parse_feature_name(std::string_view name) {
  auto open = name.find('(');
  if (open == std::string_view::npos || open == 0) return std::nullopt;
  ParsedName out;
  std::string_view head = name.substr(0, open);
  if (auto colon = head.find(':'); colon != std::string_view::npos) {
    out.param = std::string(head.substr(colon + 1));
    head = head.substr(0, colon);
  }
  out.transform = std::string(head);
  if (!builtin_catalog().find(out.transform)) return std::nullopt;

  int depth = 0;
  size_t close = std::string_view::npos, start = open + 1;
  for (size_t i = open; i < name.size(); ++i) {
    char c = name[i];
    if (c == '(') {
      ++depth;
    } else if (c == ')') {
      if (--depth == 0) {
        close = i;
        break;
      }
    } else if (c == ',' && depth == 1) {
      out.operands.emplace_back(name.substr(start, i - start));
      start = i + 1;
    }
  }
  if (close == std::string_view::npos) return std::nullopt;
  out.operands.emplace_back(name.substr(start, close - start));
  std::string_view rest = name.substr(close + 1);
  if (!rest.empty()) {
    if (rest.front() != '[' || rest.back() != ']') return std::nullopt;
    out.selector = std::string(rest.substr(1, rest.size() - 2));
  }
  for (auto &op : out.operands)
    if (op.empty()) return std::nullopt;
  return out;
}

namespace {

Column make_output(const Transform &t, std::span<const Column *const> ops, size_t n,
                   std::string_view param) {
  std::vector<std::string> names;
  std::vector<Unit> units;
  for (auto *c : ops) {
    names.push_back(c->name);
    units.push_back(c->unit);
  }
  Column c;
  c.name = feature_name(t.id, names, param);
  c.dtype = t.output;
  c.concept_name = "Unknown";
  c.unit = output_unit(t, units);
  c.present.assign(n, 0);
  if (c.dtype == DType::categorical)
    c.labels.assign(n, {});
  else
    c.values.assign(n, 0.0);
  return c;
}

template <class F>
void fill(Column &out, std::span<const Column *const> ops, F &&f) {
  for (size_t i = 0; i < out.size(); ++i) {
    bool ok = true;
    for (auto *c : ops) ok &= c->has(i);
    if (!ok) continue;
    std::optional<double> v = f(i);
    if (v && std::isfinite(*v)) {
      out.values[i] = *v;
      out.present[i] = 1;
    }
  }
}

std::vector<Column> one_hot(const Column &src, size_t n) {
  std::map<std::string, size_t> counts;
  for (size_t i = 0; i < n; ++i)
    if (src.has(i)) ++counts[src.labels[i]];
  std::vector<std::pair<std::string, size_t>> cats(counts.begin(), counts.end());
  std::stable_sort(cats.begin(), cats.end(),
                   [](auto &a, auto &b) { return a.second > b.second; });
  bool overflow = cats.size() > kOneHotMaxCategories;
  if (overflow) cats.resize(kOneHotMaxCategories);
  std::set<std::string> kept;
  for (auto &c : cats) kept.insert(c.first);

  std::vector<std::string> selectors;
  for (auto &c : cats) selectors.push_back(c.first);
  if (overflow) selectors.push_back("other");

  std::vector<Column> out;
  std::vector<std::string> names{src.name};
  for (auto &sel : selectors) {
    Column c;
    c.name = feature_name("one_hot", names) + "[" + sel + "]";
    c.dtype = DType::boolean;
    c.concept_name = "Unknown";
    c.unit = UnitExpr::dimensionless();
    c.values.assign(n, 0.0);
    c.present.assign(n, 0);
    bool is_other = overflow && &sel == &selectors.back();
    for (size_t i = 0; i < n; ++i) {
      if (!src.has(i)) continue;
      c.present[i] = 1;
      bool hit = is_other ? !kept.count(src.labels[i]) : src.labels[i] == sel;
      c.values[i] = hit ? 1.0 : 0.0;
    }
    out.push_back(std::move(c));
  }
  return out;
}

Column aggregate(const Transform &t, std::span<const Column *const> ops, size_t n) {
  Column out = make_output(t, ops, n, {});
  const Column &key = *ops[0];
  const Column *val = ops.size() > 1 ? ops[1] : nullptr;
  struct Acc {
    double sum = 0, min = INFINITY, max = -INFINITY;
    size_t count = 0;
  };
  std::unordered_map<std::string, Acc> groups;
  for (size_t i = 0; i < n; ++i) {
    if (!key.has(i)) continue;
    Acc &a = groups[key.labels[i]];
    if (!val) {
      ++a.count;
      continue;
    }
    if (!val->has(i)) continue;
    double v = val->values[i];
    a.sum += v;
    a.min = std::min(a.min, v);
    a.max = std::max(a.max, v);
    ++a.count;
  }
  for (size_t i = 0; i < n; ++i) {
    if (!key.has(i)) continue;
    const Acc &a = groups[key.labels[i]];
    std::optional<double> v;
    if (t.id == "group_by_count") v = static_cast<double>(a.count);
    else if (a.count == 0) v = std::nullopt;
    else if (t.id == "group_by_mean") v = a.sum / static_cast<double>(a.count);
    else if (t.id == "group_by_sum") v = a.sum;
    else if (t.id == "group_by_min") v = a.min;
    else v = a.max;
    if (v) {
      out.values[i] = *v;
      out.present[i] = 1;
    }
  }
  return out;
}

double haversine(double lat1, double lon1, double lat2, double lon2) {
  constexpr double rad = std::numbers::pi / 180.0;
  double dlat = (lat2 - lat1) * rad, dlon = (lon2 - lon1) * rad;
  double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
             std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

Column triple_lookup(const Transform &t, const Column &src, size_t n,
                     const KnowledgeBase *kb, std::string_view param) {
  std::vector<std::optional<std::string>> found(n);
  std::map<std::string, std::optional<std::string>> memo;
  bool all_numeric = true;
  for (size_t i = 0; i < n; ++i) {
    if (!src.has(i) || !kb) continue;
    auto [it, inserted] = memo.try_emplace(src.labels[i]);
    if (inserted) it->second = kb->lookup_by_label(src.labels[i], param);
    found[i] = it->second;
    if (found[i] && !parse_number(*found[i])) all_numeric = false;
  }
  std::vector<const Column *> one{&src};
  Column out = make_output(t, one, n, param);
  if (all_numeric) {
    out.dtype = DType::numeric;
    out.labels.clear();
    out.values.assign(n, 0.0);
    for (size_t i = 0; i < n; ++i)
      if (found[i]) {
        out.values[i] = *parse_number(*found[i]);
        out.present[i] = 1;
      }
  } else {
    for (size_t i = 0; i < n; ++i)
      if (found[i]) {
        out.labels[i] = *found[i];
        out.present[i] = 1;
      }
  }
  return out;
}

} // namespace

std::vector<Column> apply(const Transform &t, std::span<const Column *const> ops,
                          const KnowledgeBase *kb, std::string_view param) {
  if (ops.size() != t.operand_count())
    throw Error(ErrorCode::invalid_argument,
                t.id + " expects " + std::to_string(t.operand_count()) + " operands");
  size_t n = ops[0]->size();
  for (auto *c : ops)
    if (c->size() != n) throw Error(ErrorCode::length_mismatch, t.id + ": operand lengths differ");
  const std::string &id = t.id;

  if (id == "one_hot") return one_hot(*ops[0], n);
  if (t.cls == TransformClass::agg) return {aggregate(t, ops, n)};
  if (id == "triple_lookup") return {triple_lookup(t, *ops[0], n, kb, param)};

  Column out = make_output(t, ops, n, param);
  auto x = [&](size_t k, size_t i) { return ops[k]->values[i]; };
  using R = std::optional<double>;
  std::function<R(size_t)> f;
  if (id == "log") f = [&](size_t i) -> R { return x(0, i) > 0 ? R(std::log(x(0, i))) : R(); };
  else if (id == "sqrt") f = [&](size_t i) -> R { return x(0, i) >= 0 ? R(std::sqrt(x(0, i))) : R(); };
  else if (id == "square") f = [&](size_t i) -> R { return x(0, i) * x(0, i); };
  else if (id == "reciprocal") f = [&](size_t i) -> R { return x(0, i) != 0 ? R(1.0 / x(0, i)) : R(); };
  else if (id == "add") f = [&](size_t i) -> R { return x(0, i) + x(1, i); };
  else if (id == "sub") f = [&](size_t i) -> R { return x(0, i) - x(1, i); };
  else if (id == "mul") f = [&](size_t i) -> R { return x(0, i) * x(1, i); };
  else if (id == "div") f = [&](size_t i) -> R { return x(1, i) != 0 ? R(x(0, i) / x(1, i)) : R(); };
  else if (id == "and") f = [&](size_t i) -> R { return (x(0, i) != 0 && x(1, i) != 0) ? 1.0 : 0.0; };
  else if (id == "or") f = [&](size_t i) -> R { return (x(0, i) != 0 || x(1, i) != 0) ? 1.0 : 0.0; };
  else if (id == "time_diff_hours") f = [&](size_t i) -> R { return (x(0, i) - x(1, i)) / 3600.0; };
  else if (id == "haversine_km")
    f = [&](size_t i) -> R { return haversine(x(0, i), x(1, i), x(2, i), x(3, i)); };
  else if (t.cls == TransformClass::date) {
    f = [&](size_t i) -> R {
      auto c = civil_from_epoch(static_cast<int64_t>(std::floor(x(0, i))));
      if (id == "extract_day") return c.day;
      if (id == "extract_month") return c.month;
      if (id == "extract_year") return c.year;
      if (id == "is_weekend") return (c.weekday == 0 || c.weekday == 6) ? 1.0 : 0.0;
      bool rush = (c.hour >= kRushMorningStart && c.hour < kRushMorningEnd) ||
                  (c.hour >= kRushEveningStart && c.hour < kRushEveningEnd);
      return rush ? 1.0 : 0.0;
    };
  } else {
    throw Error(ErrorCode::internal, "no implementation for transform " + id);
  }
  fill(out, ops, f);
  return {std::move(out)};
}

} // namespace kgfe
