// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0

#include <set>

#include "retarget/interpreter.hpp"
#include "retarget/ir.hpp"

namespace retarget {

std::optional<Initializer> constant_value(const Graph& g, const std::string& value_name) {
  const GraphIndex idx = index_graph(g);
  auto prod = idx.producers.find(value_name);
  if (prod == idx.producers.end()) return std::nullopt;
  if (prod->second.kind == Producer::GraphInput) return std::nullopt;
  if (prod->second.kind == Producer::InitializerValue) {
    Initializer init = g.initializers[prod->second.index];
    init.spec.name = value_name;
    return init;
  }

  // A node output is constant iff every transitive producer consumes only
  // constants. Custom ops are opaque and never fold.
  std::set<std::string> constant;
  for (const auto& init : g.initializers) constant.insert(init.spec.name);
  std::set<size_t> constant_nodes;
  for (size_t i : toposort(g)) {
    const Node& n = g.nodes[i];
    if (is_custom_op(n.op_type)) continue;
    bool all_const = true;
    for (const auto& in : n.inputs)
      if (!constant.count(in)) all_const = false;
    if (!all_const) continue;
    constant_nodes.insert(i);
    for (const auto& out : n.outputs) constant.insert(out);
  }
  if (!constant.count(value_name)) return std::nullopt;

  // Fold by running the constant ancestor set as a standalone graph.
  Graph sub;
  sub.name = "fold";
  sub.outputs = {value_name};
  std::set<std::string> needed = {value_name};
  std::vector<size_t> order = toposort(g);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!constant_nodes.count(*it)) continue;
    const Node& n = g.nodes[*it];
    bool produces_needed = false;
    for (const auto& out : n.outputs)
      if (needed.count(out)) produces_needed = true;
    if (!produces_needed) continue;
    sub.nodes.push_back(n);
    for (const auto& in : n.inputs) needed.insert(in);
  }
  std::reverse(sub.nodes.begin(), sub.nodes.end());
  for (const auto& init : g.initializers)
    if (needed.count(init.spec.name)) sub.initializers.push_back(init);

  TensorMap result = run_graph(sub, {});
  return to_initializer(value_name, result.at(value_name));
}

}  // namespace retarget
