#include "reasoner.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include "error.hpp"

namespace kgfe {

namespace {

struct Mismatch {
  std::string message;
};

std::vector<Column> eval_expr(const DeriveExpr &e, const std::vector<std::string> &heads,
                              std::span<const Column *const> sources, const KnowledgeBase &kb) {
  if (e.transform.empty()) {
    auto it = std::find(heads.begin(), heads.end(), e.concept_name);
    return {*sources[static_cast<size_t>(it - heads.begin())]};
  }
  const Transform &t = builtin_catalog().at(e.transform);
  std::vector<Column> args;
  for (auto &sub : e.args) {
    auto cols = eval_expr(sub, heads, sources, kb);
    if (cols.size() != 1) throw Mismatch{"nested " + sub.transform + " yields several columns"};
    args.push_back(std::move(cols.front()));
  }
  std::vector<const Column *> ptrs;
  for (size_t i = 0; i < args.size(); ++i) {
    if (!t.accepts(i, args[i].dtype))
      throw Mismatch{t.id + " cannot take " + to_string(args[i].dtype) + " operand '" + args[i].name + "'"};
    ptrs.push_back(&args[i]);
  }
  return apply(t, ptrs, &kb, e.param);
}

bool guard_holds(const Guard &g, std::span<const Column *const> sources) {
  for (auto *c : sources) {
    if (g.kind == Guard::Kind::dtype_is && to_string(c->dtype) != g.arg) return false;
    if (g.kind == Guard::Kind::unit_is && !(c->unit && *c->unit == UnitExpr::base(g.arg))) return false;
  }
  return true;
}

std::string join(const std::vector<std::string> &v, const char *sep) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

// Every assignment of distinct feature columns to the rule heads.
std::vector<std::vector<const Column *>> source_tuples(const DerivationRule &rule,
                                                       const std::vector<const Column *> &features) {
  std::vector<std::vector<const Column *>> out{{}};
  for (auto &head : rule.heads) {
    std::vector<std::vector<const Column *>> next;
    for (auto &partial : out)
      for (auto *c : features)
        if (c->concept_name == head && std::find(partial.begin(), partial.end(), c) == partial.end()) {
          auto ext = partial;
          ext.push_back(c);
          next.push_back(std::move(ext));
        }
    out = std::move(next);
  }
  return out;
}

std::vector<Column> produce(const DerivationProduct &prod, const DerivationRule &rule,
                            std::span<const Column *const> sources, const KnowledgeBase &kb) {
  auto cols = eval_expr(prod.expr, rule.heads, sources, kb);
  for (auto &c : cols) c.concept_name = prod.concept_name;
  return cols;
}

} // namespace

ExploitResult exploit(const Dataset &d, const KnowledgeBase &kb, const ExploitOptions &opts) {
  Dataset data = d;
  InferenceTrace trace;
  std::set<std::string> produced_names;
  std::set<std::tuple<size_t, size_t, std::vector<std::string>>> done;

  for (size_t depth = 1; depth <= opts.max_depth; ++depth) {
    bool added = false;
    auto features = data.features(); // snapshot: products join the next iteration
    for (size_t ri = 0; ri < kb.derivations.size(); ++ri) {
      const DerivationRule &rule = kb.derivations[ri];
      for (auto &sources : source_tuples(rule, features)) {
        std::vector<std::string> source_names;
        for (auto *c : sources) source_names.push_back(c->name);
        const Guard *failed = nullptr;
        for (auto &g : rule.guards)
          if (!guard_holds(g, sources)) failed = &g;
        if (failed) {
          if (done.emplace(ri, SIZE_MAX, source_names).second)
            trace.warnings.push_back("rule " + std::to_string(ri) + " skipped for " +
                                     join(source_names, ",") + ": guard " + failed->arg + " failed");
          continue;
        }
        InferenceStep step{ri, source_names, {}};
        for (size_t pi = 0; pi < rule.products.size(); ++pi) {
          if (!done.emplace(ri, pi, source_names).second) continue;
          const DerivationProduct &prod = rule.products[pi];
          std::vector<Column> cols;
          try {
            cols = produce(prod, rule, sources, kb);
          } catch (const Mismatch &m) {
            trace.warnings.push_back("rule " + std::to_string(ri) + " product " + prod.concept_name +
                                     " skipped for " + join(source_names, ",") + ": " + m.message);
            continue;
          }
          for (auto &col : cols) {
            if (std::none_of(col.present.begin(), col.present.end(), [](uint8_t p) { return p; })) {
              trace.warnings.push_back("rule " + std::to_string(ri) + " product " + prod.concept_name +
                                       " for " + join(source_names, ",") + " has no values");
              continue;
            }
            bool known = false;
            for (auto *f : data.features())
              known |= f->concept_name == col.concept_name && f->same_cells(col);
            if (known) continue;
            std::string name = prod.concept_name;
            if (data.find(name)) name = prod.concept_name + "_" + join(source_names, "_");
            col.name = data.free_name(name);
            step.produced.push_back(col.name);
            produced_names.insert(col.name);
            data = data.append_feature(std::move(col), NodeId{});
            added = true;
          }
        }
        if (!step.produced.empty()) trace.steps.push_back(std::move(step));
      }
    }
    if (!added) break;
    trace.depth_reached = depth;
  }

  DecompositionGraph graph(kb.resolved_weights());
  std::map<std::string, NodeId> prov;
  for (auto *f : data.features()) {
    bool grounded = produced_names.count(f->name) ||
                    (!f->concept_name.empty() && f->concept_name != kUnknownConcept);
    prov[f->name] = grounded ? graph.add_known(f->name, 1.0, NodeKind::known_concept)
                             : graph.add_known(f->name, opts.unknown_score, NodeKind::raw);
  }
  return ExploitResult{data.with_provenance(std::move(prov)), std::move(trace), std::move(graph)};
}

std::vector<Column> replay_step(const Dataset &d, const KnowledgeBase &kb, const InferenceStep &step) {
  const DerivationRule &rule = kb.derivations.at(step.rule);
  std::vector<const Column *> sources;
  for (auto &name : step.sources) {
    const Column *c = d.find(name);
    if (!c) throw Error(ErrorCode::invalid_argument, "replay: source column '" + name + "' missing");
    sources.push_back(c);
  }
  std::vector<Column> out;
  for (auto &prod : rule.products) {
    try {
      for (auto &c : produce(prod, rule, sources, kb)) out.push_back(std::move(c));
    } catch (const Mismatch &) {
    }
  }
  return out;
}

Verdict check_interpretability_rules(const KnowledgeBase &kb, const std::string &transform,
                                     std::span<const Column *const> operands) {
  const Transform &t = builtin_catalog().at(transform);
  return kb.non_interpretable(t, operands) ? Verdict::non_interpretable : Verdict::interpretable;
}

} // namespace kgfe
