#include "itrack/scm/graph.hpp"

#include <algorithm>
#include <sstream>

namespace itrack::scm {

const char* tag_name(ValueTag tag) {
  switch (tag) {
    case ValueTag::Boolean: return "boolean";
    case ValueTag::Scalar: return "scalar";
    case ValueTag::Pose2d: return "pose2d";
    case ValueTag::OrientedBox: return "oriented-box";
    case ValueTag::BoxList: return "box-list";
    case ValueTag::FeatureVector: return "feature-vector";
    case ValueTag::FeatureList: return "feature-list";
    case ValueTag::OccupancyGrid: return "occupancy-grid";
  }
  return "?";
}

void CausalGraph::add_input(const std::string& name, ValueTag tag) {
  if (tags_.count(name)) throw ScmError("duplicate node: " + name);
  tags_[name] = tag;
  parents_[name] = {};
  inputs_.insert(name);
}

void CausalGraph::add_node(const std::string& name, ValueTag tag,
                           std::vector<std::string> parents, Equation eq) {
  if (tags_.count(name)) throw ScmError("duplicate node: " + name);
  if (!eq) throw ScmError("missing equation for node: " + name);
  tags_[name] = tag;
  parents_[name] = std::move(parents);
  equations_[name] = std::move(eq);
}

void CausalGraph::set_output(const std::string& name) {
  if (!tags_.count(name)) throw ScmError("unknown output node: " + name);
  if (tags_.at(name) != ValueTag::Boolean)
    throw ScmError("output node must be boolean: " + name);
  output_ = name;
}

ValueTag CausalGraph::tag_of(const std::string& name) const {
  auto it = tags_.find(name);
  if (it == tags_.end()) throw ScmError("unknown node: " + name);
  return it->second;
}

const std::vector<std::string>& CausalGraph::parents_of(
    const std::string& name) const {
  auto it = parents_.find(name);
  if (it == parents_.end()) throw ScmError("unknown node: " + name);
  return it->second;
}

std::vector<std::string> CausalGraph::node_names() const {
  std::vector<std::string> names;
  names.reserve(tags_.size());
  for (const auto& [n, _] : tags_) names.push_back(n);
  return names;
}

std::vector<std::string> CausalGraph::topo_order() const {
  std::map<std::string, int> indegree;
  std::map<std::string, std::vector<std::string>> children;
  for (const auto& [name, parents] : parents_) {
    indegree[name] += 0;
    for (const auto& p : parents) {
      if (!tags_.count(p))
        throw ScmError("node " + name + " has unknown parent " + p);
      ++indegree[name];
      children[p].push_back(name);
    }
  }
  std::set<std::string> ready;
  for (const auto& [name, d] : indegree)
    if (d == 0) ready.insert(name);

  std::vector<std::string> order;
  while (!ready.empty()) {
    std::string n = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(n);
    for (const auto& c : children[n])
      if (--indegree[c] == 0) ready.insert(c);
  }
  if (order.size() != tags_.size()) {
    // Walk parent pointers among unresolved nodes until one repeats,
    // then report the lexicographically smallest node on that cycle.
    std::set<std::string> stuck;
    for (const auto& [name, d] : indegree)
      if (d > 0) stuck.insert(name);
    std::string cur = *stuck.begin();
    std::vector<std::string> path;
    std::set<std::string> seen;
    while (!seen.count(cur)) {
      seen.insert(cur);
      path.push_back(cur);
      const auto& ps = parents_.at(cur);
      cur.clear();
      for (const auto& p : ps)
        if (stuck.count(p)) { cur = p; break; }
    }
    auto start = std::find(path.begin(), path.end(), cur);
    std::string named = *std::min_element(start, path.end());
    throw ScmError("cycle detected involving node: " + named);
  }
  return order;
}

void CausalGraph::check_assignment(const Assignment& input) const {
  for (const auto& n : inputs_) {
    auto it = input.find(n);
    if (it == input.end()) throw ScmError("assignment missing input: " + n);
    if (it->second.tag() != tags_.at(n))
      throw ScmError("assignment tag mismatch at input: " + n);
  }
}

std::map<std::string, NodeValue> CausalGraph::forward(
    const Assignment& input, const Intervention& clamp) const {
  check_assignment(input);
  for (const auto& [n, v] : clamp) {
    if (v.tag() != tag_of(n))
      throw ScmError("intervention tag mismatch at node: " + n);
  }
  std::map<std::string, NodeValue> values;
  for (const auto& name : topo_order()) {
    if (auto it = clamp.find(name); it != clamp.end()) {
      values[name] = it->second;
      continue;
    }
    if (inputs_.count(name)) {
      values[name] = input.at(name);
      continue;
    }
    const auto& parents = parents_.at(name);
    std::vector<NodeValue> args;
    args.reserve(parents.size());
    for (const auto& p : parents) args.push_back(values.at(p));
    NodeValue v = equations_.at(name)(args);
    if (v.tag() != tags_.at(name))
      throw ScmError("equation produced wrong tag at node: " + name);
    values[name] = std::move(v);
  }
  return values;
}

NodeValue CausalGraph::interchange(const Assignment& base,
                                   const Assignment& source,
                                   const std::vector<std::string>& nodes) const {
  check_assignment(base);
  check_assignment(source);
  for (const auto& n : nodes)
    if (!tags_.count(n)) throw ScmError("unknown interchange node: " + n);

  // Single memoized recursive pass: listed nodes are evaluated under the
  // source assignment in place, everything else under the base.
  std::set<std::string> swapped(nodes.begin(), nodes.end());
  std::map<std::string, NodeValue> base_memo, source_memo;

  std::function<const NodeValue&(const std::string&, bool)> eval =
      [&](const std::string& name, bool under_source) -> const NodeValue& {
    auto& memo = under_source ? source_memo : base_memo;
    if (auto it = memo.find(name); it != memo.end()) return it->second;
    NodeValue v;
    if (!under_source && swapped.count(name)) {
      v = eval(name, true);
    } else if (inputs_.count(name)) {
      v = (under_source ? source : base).at(name);
    } else {
      std::vector<NodeValue> args;
      for (const auto& p : parents_.at(name)) args.push_back(eval(p, under_source));
      v = equations_.at(name)(args);
    }
    return memo.emplace(name, std::move(v)).first->second;
  };
  if (output_.empty()) throw ScmError("graph has no output node");
  return eval(output_, false);
}

std::string CausalGraph::export_text() const {
  std::ostringstream os;
  for (const auto& [name, tag] : tags_)
    os << "node " << name << ": " << tag_name(tag) << "\n";
  for (const auto& [name, parents] : parents_)
    for (const auto& p : parents) os << "edge " << p << " -> " << name << "\n";
  return os.str();
}

}  // namespace itrack::scm
