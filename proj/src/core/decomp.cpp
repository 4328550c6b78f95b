#include "decomp.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

#include "error.hpp"

namespace kgfe {

const char *to_string(NodeKind k) {
  switch (k) {
  case NodeKind::known_concept: return "known_concept";
  case NodeKind::raw: return "raw";
  case NodeKind::generated: return "generated";
  }
  return "generated";
}

DecompositionGraph::DecompositionGraph(std::map<std::string, double> interp_weights)
    : weights_(std::move(interp_weights)) {}

double DecompositionGraph::transform_weight(std::string_view transform) const {
  auto it = weights_.find(std::string(transform));
  return it == weights_.end() ? 1.0 : it->second;
}

std::optional<NodeId> DecompositionGraph::find(std::string_view name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return NodeId{it->second};
}

NodeId DecompositionGraph::add_known(const std::string &name, double base_score, NodeKind kind) {
  if (base_score < 0.0 || base_score > 1.0)
    throw Error(ErrorCode::invalid_argument, "base score outside [0,1] for '" + name + "'");
  if (kind == NodeKind::generated)
    throw Error(ErrorCode::invalid_argument, "add_known cannot create generated nodes");
  if (auto existing = find(name)) return *existing;
  NodeId id{static_cast<uint32_t>(nodes_.size())};
  nodes_.push_back(FeatureNode{id, name, kind, base_score});
  in_apps_.emplace_back();
  out_apps_.emplace_back();
  scores_.push_back(base_score);
  by_name_.emplace(name, id.value);
  return id;
}

std::vector<const Application *> DecompositionGraph::incoming(NodeId x) const {
  std::vector<const Application *> out;
  for (uint32_t a : in_apps_.at(x.value)) out.push_back(&apps_[a]);
  return out;
}

bool DecompositionGraph::is_ancestor(NodeId a, NodeId b) const {
  if (a == b) return true;
  std::vector<uint8_t> seen(nodes_.size(), 0);
  std::vector<uint32_t> stack{a.value};
  while (!stack.empty()) {
    uint32_t v = stack.back();
    stack.pop_back();
    if (seen[v]) continue;
    seen[v] = 1;
    for (uint32_t ai : out_apps_[v]) {
      uint32_t w = apps_[ai].product.value;
      if (w == b.value) return true;
      stack.push_back(w);
    }
  }
  return false;
}

NodeId DecompositionGraph::add_application(const std::string &transform,
                                           std::span<const NodeId> operands,
                                           const std::string &product_name,
                                           bool non_interpretable) {
  if (operands.empty())
    throw Error(ErrorCode::invalid_argument, "application of " + transform + " has no operands");
  for (NodeId op : operands)
    if (op.value >= nodes_.size())
      throw Error(ErrorCode::invalid_argument, "unknown operand node " + std::to_string(op.value));

  NodeId product;
  if (auto existing = find(product_name)) {
    product = *existing;
    for (NodeId op : operands)
      if (is_ancestor(product, op))
        throw Error(ErrorCode::cycle, "applying " + transform + " to '" + node(op).name +
                                          "' would make '" + product_name + "' its own ancestor");
    for (uint32_t ai : in_apps_[product.value]) {
      const Application &a = apps_[ai];
      if (a.transform == transform && std::equal(a.operands.begin(), a.operands.end(),
                                                  operands.begin(), operands.end()) &&
          a.non_interpretable == non_interpretable)
        return product;
    }
  } else {
    product = NodeId{static_cast<uint32_t>(nodes_.size())};
    nodes_.push_back(FeatureNode{product, product_name, NodeKind::generated, std::nullopt});
    in_apps_.emplace_back();
    out_apps_.emplace_back();
    scores_.push_back(0.0);
    by_name_.emplace(product_name, product.value);
  }

  Application app{static_cast<uint32_t>(apps_.size()), transform,
                  std::vector<NodeId>(operands.begin(), operands.end()), product,
                  non_interpretable};
  apps_.push_back(app);
  in_apps_[product.value].push_back(app.id);
  std::set<uint32_t> distinct;
  for (NodeId op : operands)
    if (distinct.insert(op.value).second) out_apps_[op.value].push_back(app.id);
  refresh_from(product);
  return product;
}

double DecompositionGraph::score_of(NodeId x) const {
  const FeatureNode &n = nodes_[x.value];
  if (n.kind != NodeKind::generated) return *n.base_score;
  double best = 0.0;
  for (uint32_t ai : in_apps_[x.value]) {
    const Application &a = apps_[ai];
    if (a.non_interpretable) continue;
    double weakest = 1.0;
    for (NodeId op : a.operands) weakest = std::min(weakest, scores_[op.value]);
    best = std::max(best, transform_weight(a.transform) * weakest);
  }
  return best;
}

void DecompositionGraph::refresh_from(NodeId x) {
  // Recompute x and its descendants; operands are always scored first.
  std::vector<uint8_t> affected(nodes_.size(), 0);
  std::vector<uint32_t> stack{x.value};
  while (!stack.empty()) {
    uint32_t v = stack.back();
    stack.pop_back();
    if (affected[v]) continue;
    affected[v] = 1;
    for (uint32_t ai : out_apps_[v]) stack.push_back(apps_[ai].product.value);
  }
  for (NodeId v : topological_order())
    if (affected[v.value]) scores_[v.value] = score_of(v);
}

double DecompositionGraph::interpretability_uncached(NodeId x) const {
  const FeatureNode &n = nodes_.at(x.value);
  if (n.kind != NodeKind::generated) return *n.base_score;
  double best = 0.0;
  for (uint32_t ai : in_apps_[x.value]) {
    const Application &a = apps_[ai];
    if (a.non_interpretable) continue;
    double weakest = 1.0;
    for (NodeId op : a.operands) weakest = std::min(weakest, interpretability_uncached(op));
    best = std::max(best, transform_weight(a.transform) * weakest);
  }
  return best;
}

std::vector<NodeId> DecompositionGraph::topological_order() const {
  std::vector<size_t> indegree(nodes_.size(), 0);
  for (size_t v = 0; v < nodes_.size(); ++v) {
    std::set<uint32_t> preds;
    for (uint32_t ai : in_apps_[v])
      for (NodeId op : apps_[ai].operands) preds.insert(op.value);
    indegree[v] = preds.size();
  }
  auto by_name = [&](uint32_t a, uint32_t b) { return nodes_[a].name > nodes_[b].name; };
  std::priority_queue<uint32_t, std::vector<uint32_t>, decltype(by_name)> ready(by_name);
  for (size_t v = 0; v < nodes_.size(); ++v)
    if (indegree[v] == 0) ready.push(static_cast<uint32_t>(v));
  std::vector<NodeId> order;
  std::vector<std::set<uint32_t>> released(nodes_.size());
  while (!ready.empty()) {
    uint32_t v = ready.top();
    ready.pop();
    order.push_back(NodeId{v});
    for (uint32_t ai : out_apps_[v]) {
      uint32_t w = apps_[ai].product.value;
      if (released[w].insert(v).second && --indegree[w] == 0) ready.push(w);
    }
  }
  return order;
}

namespace {

std::string dot_escape(const std::string &s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

} // namespace

std::string DecompositionGraph::export_dot() const {
  std::ostringstream out;
  out << "digraph decomposition {\n  rankdir=LR;\n";
  auto order = topological_order();
  for (NodeId v : order) {
    const FeatureNode &n = nodes_[v.value];
    out << "  \"" << dot_escape(n.name) << "\" [kind=\"" << to_string(n.kind) << "\", score=\""
        << format_number(scores_[v.value]) << "\", shape="
        << (n.kind == NodeKind::generated ? "ellipse" : "box") << "];\n";
  }
  for (NodeId v : order)
    for (uint32_t ai : in_apps_[v.value]) {
      const Application &a = apps_[ai];
      for (NodeId op : a.operands) {
        out << "  \"" << dot_escape(nodes_[op.value].name) << "\" -> \"" << dot_escape(nodes_[v.value].name)
            << "\" [label=\"" << a.transform << "\", application=" << a.id;
        if (a.non_interpretable) out << ", style=dashed, non_interpretable=true";
        out << "];\n";
      }
    }
  out << "}\n";
  return out.str();
}

std::string DecompositionGraph::export_json() const {
  using nlohmann::json;
  json j;
  j["interp_weights"] = weights_;
  json nodes = json::array();
  for (NodeId v : topological_order()) {
    const FeatureNode &n = nodes_[v.value];
    json node{{"id", n.id.value}, {"name", n.name}, {"kind", to_string(n.kind)},
              {"score", scores_[v.value]}};
    if (n.base_score) node["base_score"] = *n.base_score;
    nodes.push_back(node);
  }
  j["nodes"] = nodes;
  json apps = json::array();
  for (auto &a : apps_) {
    json ops = json::array();
    for (NodeId op : a.operands) ops.push_back(op.value);
    apps.push_back({{"id", a.id}, {"transform", a.transform}, {"operands", ops},
                    {"product", a.product.value}, {"non_interpretable", a.non_interpretable}});
  }
  j["applications"] = apps;
  return j.dump(2) + "\n";
}

DecompositionGraph DecompositionGraph::from_json(std::string_view text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
    DecompositionGraph g(j.at("interp_weights").get<std::map<std::string, double>>());
    std::map<uint32_t, json> by_id;
    for (auto &n : j.at("nodes")) by_id[n.at("id").get<uint32_t>()] = n;
    std::map<uint32_t, NodeId> remap;
    for (auto &[id, n] : by_id) {
      std::string kind = n.at("kind").get<std::string>();
      if (kind == "generated") continue;
      remap[id] = g.add_known(n.at("name").get<std::string>(), n.at("base_score").get<double>(),
                              kind == "raw" ? NodeKind::raw : NodeKind::known_concept);
    }
    for (auto &a : j.at("applications")) {
      std::vector<NodeId> ops;
      for (auto &op : a.at("operands")) {
        uint32_t oid = op.get<uint32_t>();
        if (!remap.count(oid)) throw Error(ErrorCode::invalid_argument, "application operand precedes its node");
        ops.push_back(remap.at(oid));
      }
      uint32_t pid = a.at("product").get<uint32_t>();
      NodeId p = g.add_application(a.at("transform").get<std::string>(), ops,
                                   by_id.at(pid).at("name").get<std::string>(),
                                   a.at("non_interpretable").get<bool>());
      remap[pid] = p;
    }
    return g;
  } catch (const json::exception &e) {
    throw Error(ErrorCode::invalid_argument, std::string("decomposition graph JSON: ") + e.what());
  }
}

InterpSummary dataset_interpretability(const DecompositionGraph &g, std::span<const NodeId> features) {
  InterpSummary s;
  for (NodeId f : features) s.sum += g.interpretability(f);
  s.count = features.size();
  s.mean = s.count ? s.sum / static_cast<double>(s.count) : 0.0;
  return s;
}

} // namespace kgfe
