#include "kg_store.hpp"

#include <algorithm>
#include <cctype>
#include <fnmatch.h>
#include <fstream>
#include <set>
#include <sstream>

#include "error.hpp"
#include "transforms.hpp"

namespace kgfe {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto &c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

const std::set<std::string> &known_classes() {
  static const std::set<std::string> s{"arith", "unary", "logical", "agg",
                                       "date",  "geo",   "encoding", "lookup"};
  return s;
}

struct PendingRef {
  enum class Kind { concept_ref, unit } kind;
  std::string name;
  int line, col;
};

class LineParser {
public:
  LineParser(std::string_view line, int line_no, const std::string &source)
      : line_(line), line_no_(line_no), source_(source) {}

  [[noreturn]] void fail(ErrorCode code, const std::string &msg, size_t at) const {
    throw Error(code, source_ + ":" + std::to_string(line_no_) + ":" +
                          std::to_string(at + 1) + ": " + msg);
  }
  [[noreturn]] void fail(const std::string &msg) const { fail(ErrorCode::kg_syntax, msg, pos_); }

  void skip_ws() {
    while (pos_ < line_.size() && std::isspace(static_cast<unsigned char>(line_[pos_]))) ++pos_;
  }
  bool at_end() {
    skip_ws();
    return pos_ >= line_.size();
  }
  size_t pos() {
    skip_ws();
    return pos_;
  }
  int line_no() const { return line_no_; }

  std::string ident(const char *what) {
    skip_ws();
    size_t start = pos_;
    while (pos_ < line_.size() && is_ident_char(line_[pos_])) ++pos_;
    if (start == pos_) fail(std::string("expected ") + what);
    return std::string(line_.substr(start, pos_ - start));
  }

  // Run of non-space characters.
  std::string word(const char *what) {
    skip_ws();
    size_t start = pos_;
    while (pos_ < line_.size() && !std::isspace(static_cast<unsigned char>(line_[pos_]))) ++pos_;
    if (start == pos_) fail(std::string("expected ") + what);
    return std::string(line_.substr(start, pos_ - start));
  }

  bool peek(std::string_view tok) {
    skip_ws();
    return line_.substr(pos_, tok.size()) == tok;
  }
  bool peek_keyword(std::string_view kw) {
    skip_ws();
    if (line_.substr(pos_, kw.size()) != kw) return false;
    size_t after = pos_ + kw.size();
    return after >= line_.size() || !is_ident_char(line_[after]);
  }
  bool accept(std::string_view tok) {
    if (!peek(tok)) return false;
    pos_ += tok.size();
    return true;
  }
  void expect(std::string_view tok) {
    if (!accept(tok)) fail("expected '" + std::string(tok) + "'");
  }
  void expect_keyword(std::string_view kw) {
    if (!peek_keyword(kw)) fail("expected '" + std::string(kw) + "'");
    pos_ += kw.size();
  }
  // Raw text up to (not including) one of `stops`, trimmed.
  std::string until(std::string_view stops) {
    size_t start = pos_;
    while (pos_ < line_.size() && stops.find(line_[pos_]) == std::string_view::npos) ++pos_;
    return std::string(trim(line_.substr(start, pos_ - start)));
  }
  void expect_end() {
    if (!at_end()) fail("unexpected trailing text");
  }

private:
  std::string_view line_;
  size_t pos_ = 0;
  int line_no_;
  const std::string &source_;
};

class KgParser {
public:
  explicit KgParser(const std::string &source) : source_(source) {}

  KnowledgeBase parse(std::string_view text) {
    int line_no = 0;
    size_t start = 0;
    while (start <= text.size()) {
      size_t end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      ++line_no;
      std::string_view line = text.substr(start, end - start);
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      while (!line.empty() && (std::isspace(static_cast<unsigned char>(line.back())) || line.back() == ';'))
        line.remove_suffix(1);
      if (!trim(line).empty()) statement(LineParser(line, line_no, source_));
      if (end == text.size()) break;
      start = end + 1;
    }
    resolve();
    return std::move(kb_);
  }

private:
  void statement(LineParser p) {
    size_t kw_pos = p.pos();
    std::string kw = p.ident("statement keyword");
    if (kw == "concept") concept_stmt(p);
    else if (kw == "unit") unit_stmt(p);
    else if (kw == "map") map_stmt(p);
    else if (kw == "derive") derive_stmt(p);
    else if (kw == "noninterp") noninterp_stmt(p);
    else if (kw == "triple") triple_stmt(p);
    else if (kw == "interp_weight") weight_stmt(p);
    else p.fail(ErrorCode::kg_syntax, "unknown statement '" + kw + "'", kw_pos);
  }

  void ref(LineParser &p, PendingRef::Kind kind, std::string name, size_t at) {
    refs_.push_back({kind, std::move(name), p.line_no(), static_cast<int>(at)});
  }

  void concept_stmt(LineParser &p) {
    size_t at = p.pos();
    std::string id = p.ident("concept id");
    p.expect_end();
    if (id == kUnknownConcept)
      p.fail(ErrorCode::kg_duplicate, "concept 'Unknown' is reserved", at);
    if (kb_.has_concept(id)) p.fail(ErrorCode::kg_duplicate, "duplicate concept '" + id + "'", at);
    kb_.concepts.push_back(id);
  }

  void unit_stmt(LineParser &p) {
    size_t at = p.pos();
    UnitDecl u;
    u.id = p.ident("unit id");
    p.expect_keyword("dim");
    u.dim = p.ident("dimension group");
    p.expect_end();
    if (kb_.find_unit(u.id)) p.fail(ErrorCode::kg_duplicate, "duplicate unit '" + u.id + "'", at);
    kb_.units.push_back(u);
  }

  void map_stmt(LineParser &p) {
    ColumnMapping m;
    m.pattern = p.word("column pattern");
    p.expect("->");
    p.expect_keyword("concept");
    p.expect(":");
    size_t at = p.pos();
    m.concept_name = p.ident("concept id");
    ref(p, PendingRef::Kind::concept_ref, m.concept_name, at);
    if (p.peek_keyword("unit")) {
      p.expect_keyword("unit");
      p.expect(":");
      at = p.pos();
      m.unit = p.ident("unit id");
      ref(p, PendingRef::Kind::unit, *m.unit, at);
    }
    p.expect_end();
    kb_.mappings.push_back(m);
  }

  DeriveExpr expr(LineParser &p, const std::vector<std::string> &heads, bool top) {
    size_t at = p.pos();
    std::string id = p.ident("transform or concept");
    const Transform *t = builtin_catalog().find(id);
    if (!p.peek("(")) {
      if (!top) {
        if (std::find(heads.begin(), heads.end(), id) == heads.end())
          p.fail(ErrorCode::kg_unknown_reference,
                 "'" + id + "' is not a head concept of this rule", at);
        return DeriveExpr{"", "", id, {}};
      }
      if (!t) p.fail(ErrorCode::kg_unknown_reference, "unknown transform '" + id + "'", at);
      if (t->arity == Arity::lookup) p.fail("triple_lookup needs a predicate: triple_lookup(<predicate>)");
      if (t->operand_count() != heads.size())
        p.fail(ErrorCode::kg_syntax,
               id + " takes " + std::to_string(t->operand_count()) + " operand(s), rule has " +
                   std::to_string(heads.size()) + " head concept(s)",
               at);
      DeriveExpr e{id, "", "", {}};
      for (auto &h : heads) e.args.push_back(DeriveExpr{"", "", h, {}});
      return e;
    }
    if (!t) p.fail(ErrorCode::kg_unknown_reference, "unknown transform '" + id + "'", at);
    p.expect("(");
    DeriveExpr e{id, "", "", {}};
    if (t->arity == Arity::lookup) {
      if (!top) p.fail(ErrorCode::kg_syntax, "triple_lookup may only appear at the top of a product", at);
      e.param = p.ident("triple predicate");
      p.expect(")");
      e.args.push_back(DeriveExpr{"", "", heads.front(), {}});
      return e;
    }
    do {
      e.args.push_back(expr(p, heads, false));
    } while (p.accept(","));
    p.expect(")");
    if (e.args.size() != t->operand_count())
      p.fail(ErrorCode::kg_syntax,
             id + " takes " + std::to_string(t->operand_count()) + " operand(s), got " +
                 std::to_string(e.args.size()),
             at);
    return e;
  }

  void derive_stmt(LineParser &p) {
    DerivationRule rule;
    do {
      size_t at = p.pos();
      rule.heads.push_back(p.ident("head concept"));
      ref(p, PendingRef::Kind::concept_ref, rule.heads.back(), at);
    } while (p.accept(","));
    p.expect("=>");
    do {
      DerivationProduct prod;
      size_t at = p.pos();
      prod.concept_name = p.ident("product concept");
      ref(p, PendingRef::Kind::concept_ref, prod.concept_name, at);
      p.expect_keyword("via");
      prod.expr = expr(p, rule.heads, true);
      rule.products.push_back(std::move(prod));
    } while (p.accept(","));
    if (p.peek_keyword("when")) {
      p.expect_keyword("when");
      do {
        size_t at = p.pos();
        std::string kind = p.ident("guard");
        p.expect("(");
        Guard g;
        if (kind == "dtype_is") {
          g.kind = Guard::Kind::dtype_is;
          g.arg = p.ident("dtype");
          if (!parse_dtype(g.arg)) p.fail(ErrorCode::kg_syntax, "unknown dtype '" + g.arg + "'", at);
        } else if (kind == "unit_is") {
          g.kind = Guard::Kind::unit_is;
          size_t uat = p.pos();
          g.arg = p.ident("unit id");
          ref(p, PendingRef::Kind::unit, g.arg, uat);
        } else {
          p.fail(ErrorCode::kg_syntax, "unknown guard '" + kind + "'", at);
        }
        p.expect(")");
        rule.guards.push_back(g);
      } while (p.peek_keyword("and") && (p.expect_keyword("and"), true));
    }
    p.expect_end();
    kb_.derivations.push_back(std::move(rule));
  }

  void noninterp_stmt(LineParser &p) {
    InterpRule rule;
    size_t at = p.pos();
    std::string first = p.ident("transform id or 'class'");
    if (first == "class" && p.accept(":")) {
      std::string cls = p.ident("transform class");
      if (!known_classes().count(cls))
        p.fail(ErrorCode::kg_unknown_reference, "unknown transform class '" + cls + "'", at);
      rule.pattern = "class:" + cls;
    } else {
      if (!builtin_catalog().find(first))
        p.fail(ErrorCode::kg_unknown_reference, "unknown transform '" + first + "'", at);
      rule.pattern = first;
    }
    p.expect_keyword("when");
    do {
      size_t pat = p.pos();
      std::string kind = p.ident("predicate");
      OperandPredicate pred;
      if (kind == "units_differ") {
        pred.kind = OperandPredicate::Kind::units_differ;
      } else if (kind == "unit_is" || kind == "concept_is") {
        bool unit = kind == "unit_is";
        pred.kind = unit ? OperandPredicate::Kind::unit_is : OperandPredicate::Kind::concept_is;
        p.expect("(");
        size_t aat = p.pos();
        pred.arg = p.ident(unit ? "unit id" : "concept id");
        ref(p, unit ? PendingRef::Kind::unit : PendingRef::Kind::concept_ref, pred.arg, aat);
        p.expect(")");
      } else {
        p.fail(ErrorCode::kg_syntax, "unknown predicate '" + kind + "'", pat);
      }
      rule.predicates.push_back(pred);
    } while (p.peek_keyword("and") && (p.expect_keyword("and"), true));
    p.expect_end();
    kb_.interp_rules.push_back(std::move(rule));
  }

  void triple_stmt(LineParser &p) {
    p.expect("(");
    Triple t;
    t.subject = p.until(",)");
    p.expect(",");
    t.predicate = p.until(",)");
    p.expect(",");
    t.object = p.until(")");
    p.expect(")");
    p.expect_end();
    if (t.object.size() >= 2 && t.object.front() == '"' && t.object.back() == '"')
      t.object = t.object.substr(1, t.object.size() - 2);
    if (t.subject.empty() || t.predicate.empty() || t.object.empty())
      p.fail("triple elements must be nonempty");
    kb_.triples.push_back(std::move(t));
  }

  void weight_stmt(LineParser &p) {
    size_t at = p.pos();
    std::string id = p.ident("transform id");
    if (!builtin_catalog().find(id))
      p.fail(ErrorCode::kg_unknown_reference, "unknown transform '" + id + "'", at);
    size_t vat = p.pos();
    std::string text = p.word("weight");
    p.expect_end();
    auto v = parse_number(text);
    if (!v) p.fail(ErrorCode::kg_syntax, "invalid weight '" + text + "'", vat);
    if (*v < 0.0 || *v > 1.0)
      p.fail(ErrorCode::kg_score_range, "weight " + text + " outside [0,1]", vat);
    if (!kb_.interp_weights.emplace(id, *v).second)
      p.fail(ErrorCode::kg_duplicate, "duplicate interp_weight for '" + id + "'", at);
  }

  void resolve() {
    for (auto &r : refs_) {
      bool ok = r.kind == PendingRef::Kind::concept_ref
                    ? (kb_.has_concept(r.name) || r.name == kKnownUnknown)
                    : kb_.find_unit(r.name) != nullptr;
      if (!ok)
        throw Error(ErrorCode::kg_unknown_reference,
                    source_ + ":" + std::to_string(r.line) + ":" + std::to_string(r.col + 1) +
                        ": unknown " + (r.kind == PendingRef::Kind::concept_ref ? "concept" : "unit") +
                        " '" + r.name + "'");
    }
  }

  static constexpr const char *kKnownUnknown = kUnknownConcept;

  const std::string &source_;
  KnowledgeBase kb_;
  std::vector<PendingRef> refs_;
};

} // namespace

bool KnowledgeBase::has_concept(std::string_view id) const {
  return std::find(concepts.begin(), concepts.end(), id) != concepts.end();
}

const UnitDecl *KnowledgeBase::find_unit(std::string_view id) const {
  for (auto &u : units)
    if (u.id == id) return &u;
  return nullptr;
}

double KnowledgeBase::transform_weight(std::string_view transform) const {
  if (auto it = interp_weights.find(std::string(transform)); it != interp_weights.end())
    return it->second;
  if (auto *t = builtin_catalog().find(transform))
    return TransformCatalog::default_weight(t->cls);
  return 0.0;
}

std::map<std::string, double> KnowledgeBase::resolved_weights() const {
  std::map<std::string, double> out;
  for (auto &t : builtin_catalog().transforms()) out[t.id] = transform_weight(t.id);
  return out;
}

std::vector<std::string> KnowledgeBase::dimension_groups() const {
  std::set<std::string> dims;
  for (auto &u : units) dims.insert(u.dim);
  std::vector<std::string> out(dims.begin(), dims.end());
  for (const char *reserved : {"dimensionless", "derived", "unknown"})
    if (!dims.count(reserved)) out.push_back(reserved);
  return out;
}

std::string KnowledgeBase::dimension_of(const Unit &u) const {
  if (!u) return "unknown";
  if (u->is_dimensionless()) return "dimensionless";
  if (auto base = u->as_base())
    if (auto *decl = find_unit(*base)) return decl->dim;
  return "derived";
}

std::vector<std::string> KnowledgeBase::lookup_related(std::string_view entity,
                                                       std::string_view predicate) const {
  std::vector<std::string> out;
  for (auto &t : triples)
    if (t.subject == entity && t.predicate == predicate) out.push_back(t.object);
  return out;
}

std::optional<std::string> KnowledgeBase::lookup_by_label(std::string_view label,
                                                          std::string_view predicate) const {
  std::string key = lower(trim(label));
  for (auto &t : triples)
    if (t.predicate == predicate && lower(trim(t.subject)) == key) return t.object;
  return std::nullopt;
}

bool KnowledgeBase::non_interpretable(const Transform &t,
                                      std::span<const Column *const> operands) const {
  for (auto &rule : interp_rules) {
    bool pattern_hit = rule.pattern == t.id ||
                       (rule.pattern.rfind("class:", 0) == 0 &&
                        rule.pattern.substr(6) == to_string(t.cls));
    if (!pattern_hit) continue;
    bool all = true;
    for (auto &pred : rule.predicates) {
      bool hit = false;
      switch (pred.kind) {
      case OperandPredicate::Kind::units_differ:
        for (size_t i = 0; i < operands.size() && !hit; ++i)
          for (size_t j = i + 1; j < operands.size() && !hit; ++j)
            hit = operands[i]->unit && operands[j]->unit && *operands[i]->unit != *operands[j]->unit;
        break;
      case OperandPredicate::Kind::unit_is:
        for (auto *c : operands) hit |= c->unit && *c->unit == UnitExpr::base(pred.arg);
        break;
      case OperandPredicate::Kind::concept_is:
        for (auto *c : operands) hit |= c->concept_name == pred.arg;
        break;
      }
      if (!hit) {
        all = false;
        break;
      }
    }
    if (all) return true;
  }
  return false;
}

KnowledgeBase parse_kg_text(std::string_view text, const std::string &source) {
  return KgParser(source).parse(text);
}

KnowledgeBase parse_kg(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot read knowledge base '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_kg_text(ss.str(), path);
}

std::string print_expr(const DeriveExpr &e) {
  if (e.transform.empty()) return e.concept_name;
  if (!e.param.empty()) return e.transform + "(" + e.param + ")";
  std::string out = e.transform + "(";
  for (size_t i = 0; i < e.args.size(); ++i) {
    if (i) out += ", ";
    out += print_expr(e.args[i]);
  }
  return out + ")";
}

std::string print_kg(const KnowledgeBase &kb) {
  std::ostringstream out;
  for (auto &c : kb.concepts) out << "concept " << c << "\n";
  for (auto &u : kb.units) out << "unit " << u.id << " dim " << u.dim << "\n";
  for (auto &m : kb.mappings) {
    out << "map " << m.pattern << " -> concept:" << m.concept_name;
    if (m.unit) out << " unit:" << *m.unit;
    out << "\n";
  }
  for (auto &r : kb.derivations) {
    out << "derive ";
    for (size_t i = 0; i < r.heads.size(); ++i) out << (i ? ", " : "") << r.heads[i];
    out << " =>";
    for (size_t i = 0; i < r.products.size(); ++i)
      out << (i ? ", " : " ") << r.products[i].concept_name << " via " << print_expr(r.products[i].expr);
    for (size_t i = 0; i < r.guards.size(); ++i) {
      auto &g = r.guards[i];
      out << (i ? " and " : " when ")
          << (g.kind == Guard::Kind::dtype_is ? "dtype_is(" : "unit_is(") << g.arg << ")";
    }
    out << "\n";
  }
  for (auto &r : kb.interp_rules) {
    out << "noninterp " << r.pattern << " when ";
    for (size_t i = 0; i < r.predicates.size(); ++i) {
      auto &p = r.predicates[i];
      if (i) out << " and ";
      switch (p.kind) {
      case OperandPredicate::Kind::units_differ: out << "units_differ"; break;
      case OperandPredicate::Kind::unit_is: out << "unit_is(" << p.arg << ")"; break;
      case OperandPredicate::Kind::concept_is: out << "concept_is(" << p.arg << ")"; break;
      }
    }
    out << "\n";
  }
  for (auto &t : kb.triples)
    out << "triple (" << t.subject << ", " << t.predicate << ", " << t.object << ")\n";
  for (auto &[id, w] : kb.interp_weights) out << "interp_weight " << id << " " << format_number(w) << "\n";
  return out.str();
}

Dataset map_columns(const KnowledgeBase &kb, const Dataset &d) {
  Dataset out = d;
  const auto &cols = d.columns();
  for (size_t j = 0; j < cols.size(); ++j) {
    const Column &c = *cols[j];
    if (c.name == d.target_name() || !c.concept_name.empty()) continue;
    std::vector<const ColumnMapping *> hits;
    std::string lname = lower(c.name);
    for (auto &m : kb.mappings)
      if (lower(m.pattern) == lname) hits.push_back(&m);
    if (hits.empty())
      for (auto &m : kb.mappings)
        if (fnmatch(m.pattern.c_str(), c.name.c_str(), FNM_CASEFOLD) == 0) hits.push_back(&m);
    Column annotated = c;
    if (hits.empty()) {
      annotated.concept_name = kUnknownConcept;
    } else {
      for (auto *h : hits)
        if (h->concept_name != hits.front()->concept_name)
          throw Error(ErrorCode::ambiguous_mapping,
                      "column '" + c.name + "' matches '" + hits.front()->pattern +
                          "' (concept " + hits.front()->concept_name + ") and '" + h->pattern +
                          "' (concept " + h->concept_name + ")");
      annotated.concept_name = hits.front()->concept_name;
      if (!annotated.unit)
        for (auto *h : hits)
          if (h->unit) {
            annotated.unit = UnitExpr::base(*h->unit);
            break;
          }
    }
    out = out.with_column(j, std::move(annotated));
  }
  return out;
}

} // namespace kgfe
