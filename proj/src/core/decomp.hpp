#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tabular.hpp"

namespace kgfe {

enum class NodeKind { known_concept, raw, generated };
const char *to_string(NodeKind k);

struct FeatureNode {
  NodeId id;
  std::string name;
  NodeKind kind;
  std::optional<double> base_score; // known_concept and raw nodes
};

// One k-ary application: k operand edges into `product`.
struct Application {
  uint32_t id;
  std::string transform;
  std::vector<NodeId> operands;
  NodeId product;
  bool non_interpretable = false;
};

// Features as nodes, transformation applications as edges. Scores are kept
// current on every mutation, so reads never mutate and may run concurrently.
class DecompositionGraph {
public:
  DecompositionGraph() = default;
  explicit DecompositionGraph(std::map<std::string, double> interp_weights);

  NodeId add_known(const std::string &name, double base_score,
                   NodeKind kind = NodeKind::known_concept);
  // Returns the product node. Re-deriving an existing name adds an
  // application to it; an identical application is a no-op.
  NodeId add_application(const std::string &transform, std::span<const NodeId> operands,
                         const std::string &product_name, bool non_interpretable = false);

  double interpretability(NodeId x) const { return scores_.at(x.value); }
  // Plain recursion without the stored scores.
  double interpretability_uncached(NodeId x) const;

  std::optional<NodeId> find(std::string_view name) const;
  const FeatureNode &node(NodeId id) const { return nodes_.at(id.value); }
  const std::vector<FeatureNode> &nodes() const { return nodes_; }
  const std::vector<Application> &applications() const { return apps_; }
  std::vector<const Application *> incoming(NodeId x) const;
  double transform_weight(std::string_view transform) const;
  const std::map<std::string, double> &weights() const { return weights_; }

  bool is_ancestor(NodeId a, NodeId b) const; // a reaches b
  // Kahn order, ties broken by node name.
  std::vector<NodeId> topological_order() const;

  std::string export_dot() const;
  std::string export_json() const;
  static DecompositionGraph from_json(std::string_view text);

private:
  double score_of(NodeId x) const;
  void refresh_from(NodeId x);

  std::map<std::string, double> weights_;
  std::vector<FeatureNode> nodes_;
  std::vector<Application> apps_;
  std::vector<std::vector<uint32_t>> in_apps_;  // node -> application ids
  std::vector<std::vector<uint32_t>> out_apps_; // node -> applications using it
  std::map<std::string, uint32_t, std::less<>> by_name_;
  std::vector<double> scores_;
};

struct InterpSummary {
  double mean = 0.0; // 0 for an empty feature list
  double sum = 0.0;
  size_t count = 0;
};

InterpSummary dataset_interpretability(const DecompositionGraph &g, std::span<const NodeId> features);

} // namespace kgfe
