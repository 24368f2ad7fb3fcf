#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "itrack/core/types.hpp"

namespace itrack::scm {

enum class ValueTag {
  Boolean,
  Scalar,
  Pose2d,
  OrientedBox,
  BoxList,
  FeatureVector,
  FeatureList,
  OccupancyGrid,
};

const char* tag_name(ValueTag tag);

/// Tagged value carried by one causal-graph node. The tag of a node is
/// fixed across all evaluations of a graph.
class NodeValue {
 public:
  using Storage = std::variant<bool, double, Pose2d, OrientedBox, BoxList,
                               Vec, FeatureList, OcclusionGrid>;

  NodeValue() : v_(false) {}
  NodeValue(bool b) : v_(b) {}
  NodeValue(double s) : v_(s) {}
  NodeValue(const Pose2d& p) : v_(p) {}
  NodeValue(const OrientedBox& b) : v_(b) {}
  NodeValue(BoxList l) : v_(std::move(l)) {}
  NodeValue(Vec f) : v_(std::move(f)) {}
  NodeValue(FeatureList l) : v_(std::move(l)) {}
  NodeValue(OcclusionGrid g) : v_(std::move(g)) {}

  ValueTag tag() const { return static_cast<ValueTag>(v_.index()); }

  bool as_bool() const { return std::get<bool>(v_); }
  double as_scalar() const { return std::get<double>(v_); }
  const Pose2d& as_pose() const { return std::get<Pose2d>(v_); }
  const OrientedBox& as_box() const { return std::get<OrientedBox>(v_); }
  const BoxList& as_box_list() const { return std::get<BoxList>(v_); }
  const Vec& as_feature() const { return std::get<Vec>(v_); }
  const FeatureList& as_feature_list() const {
    return std::get<FeatureList>(v_);
  }
  const OcclusionGrid& as_grid() const { return std::get<OcclusionGrid>(v_); }

  bool operator==(const NodeValue& o) const {
    if (v_.index() != o.v_.index()) return false;
    if (tag() == ValueTag::FeatureVector) return as_feature() == o.as_feature();
    if (tag() == ValueTag::FeatureList) {
      const auto& a = as_feature_list();
      const auto& b = o.as_feature_list();
      if (a.size() != b.size()) return false;
      for (size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
      return true;
    }
    return v_ == o.v_;
  }

 private:
  Storage v_;
};

struct ScmError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Assignment = std::map<std::string, NodeValue>;
using Intervention = std::map<std::string, NodeValue>;
using Equation = std::function<NodeValue(std::span<const NodeValue>)>;

/// Immutable-after-construction DAG of named nodes with structural
/// equations. Input nodes have no parents and no equation; every other
/// node computes a pure function of its parents. A single boolean output
/// node carries the decision.
class CausalGraph {
 public:
  void add_input(const std::string& name, ValueTag tag);
  void add_node(const std::string& name, ValueTag tag,
                std::vector<std::string> parents, Equation eq);
  void set_output(const std::string& name);

  bool has_node(const std::string& name) const {
    return tags_.count(name) != 0;
  }
  ValueTag tag_of(const std::string& name) const;
  const std::vector<std::string>& parents_of(const std::string& name) const;
  const std::set<std::string>& inputs() const { return inputs_; }
  const std::string& output() const { return output_; }
  std::vector<std::string> node_names() const;

  /// Deterministic topological order, lexicographic tie-break.
  /// Throws ScmError naming a node on a cycle when the graph is cyclic.
  std::vector<std::string> topo_order() const;

  /// Evaluates every node. Clamped nodes take their intervention value
  /// verbatim; inputs take their assignment value; all others apply
  /// their equation to parent values.
  std::map<std::string, NodeValue> forward(const Assignment& input,
                                           const Intervention& clamp) const;

  /// Computes each listed node under the source input and clamps it
  /// into a run on the base input; returns the output node's value.
  NodeValue interchange(const Assignment& base, const Assignment& source,
                        const std::vector<std::string>& nodes) const;

  /// Plain-text structure listing: one "node <name>: <tag>" line per
  /// node (lexicographic), one "edge <parent> -> <child>" line per edge.
  std::string export_text() const;

 private:
  void check_assignment(const Assignment& input) const;

  std::map<std::string, ValueTag> tags_;
  std::map<std::string, std::vector<std::string>> parents_;
  std::map<std::string, Equation> equations_;
  std::set<std::string> inputs_;
  std::string output_;
};

}  // namespace itrack::scm
