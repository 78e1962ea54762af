// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0

#include "retarget/analyzer.hpp"

#include <sstream>

#include <nlohmann/json.hpp>

namespace retarget {

using nlohmann::json;

namespace {

// Tail eligibility of a single node: its descendant closure stays within the
// configured fraction of the graph, is not the whole graph, and consumes no
// graph input directly (the post-processing stage must feed on prefix
// outputs only).
struct TailCheck {
  bool eligible = false;
  size_t closure_size = 0;
};

TailCheck check_tail(const Graph& g, const GraphIndex& idx, size_t node_index,
                     double tail_fraction) {
  TailCheck result;
  std::set<size_t> closure = descendant_closure(g, idx, {node_index});
  result.closure_size = closure.size();
  if (closure.size() >= g.nodes.size()) return result;
  if (static_cast<double>(closure.size()) >
      tail_fraction * static_cast<double>(g.nodes.size()))
    return result;
  for (size_t i : closure)
    for (const auto& in : g.nodes[i].inputs) {
      auto p = idx.producers.find(in);
      if (p != idx.producers.end() && p->second.kind == Producer::GraphInput)
        return result;
    }
  result.eligible = true;
  return result;
}

// First rule of the given scenario that matches the node and whose
// replacement uses only ops the profile supports.
const RewriteRule* matching_rule(const RuleInput& input, Scenario scenario,
                                 const CapabilityProfile& p, const RuleRegistry& rules) {
  for (const RewriteRule& rule : rules.rules()) {
    if (rule.scenario != scenario) continue;
    if (!rule.matches(input)) continue;
    std::set<std::string> values, ids;
    NameAllocator value_names(values), node_ids(ids);
    RuleApplication app = rule.build(input, value_names, node_ids);
    bool ok = true;
    for (const Node& n : app.nodes)
      if (!supports(p, n)) ok = false;
    if (ok) return &rule;
  }
  return nullptr;
}

std::string percent(double fraction) {
  std::ostringstream os;
  os << fraction * 100.0 << "%";
  return os.str();
}

}  // namespace

CompatibilityReport analyze(const Graph& g, const CapabilityProfile& p,
                            const RuleRegistry& rules, const AnalyzeOptions& opts) {
  const auto shapes = infer_shapes(g);
  const GraphIndex idx = index_graph(g);
  const auto order = toposort(g);

  CompatibilityReport report;
  report.profile_name = p.name;

  if (p.single_output_only && g.outputs.size() > 1)
    report.structural_violations.push_back(
        "graph declares " + std::to_string(g.outputs.size()) +
        " outputs but the target supports a single output node only");
  if (p.max_input_pixels) {
    for (const auto& in : g.inputs) {
      if (in.shape.size() != 4) continue;
      const int64_t pixels = in.shape[2] * in.shape[3];
      if (pixels > *p.max_input_pixels)
        report.structural_violations.push_back(
            "input '" + in.name + "' resolution " + std::to_string(in.shape[2]) + "x" +
            std::to_string(in.shape[3]) + " exceeds the target cap of " +
            std::to_string(*p.max_input_pixels) + " pixels");
    }
  }

  for (size_t i : order) {
    const Node& node = g.nodes[i];
    if (supports(p, node)) continue;

    const RuleInput input{g, node, shapes};
    const TailCheck tail = check_tail(g, idx, i, opts.tail_fraction);
    const std::string base = "op '" + node.op_type + "' unsupported by '" + p.name + "'";

    ScenarioAssignment a;
    a.node_id = node.id;

    auto classify_as = [&](Scenario s, bool forced) -> bool {
      switch (s) {
        case Scenario::S1_Substitute: {
          const RewriteRule* rule =
              matching_rule(input, Scenario::S1_Substitute, p, rules);
          if (!rule) return false;
          a.scenario = s;
          a.rule_id = rule->rule_id;
          a.rationale = base + "; rule '" + rule->rule_id +
                        "' substitutes supported ops without retraining";
          if (tail.eligible && !forced)
            a.rationale += " (also tail-eligible; substitution preferred by policy)";
          return true;
        }
        case Scenario::S3_TailSplit: {
          if (!forced && !tail.eligible) return false;
          a.scenario = s;
          a.rationale = base + "; trailing closure of " +
                        std::to_string(tail.closure_size) + "/" +
                        std::to_string(g.nodes.size()) + " nodes" +
                        (forced ? " (forced by preference)"
                                : " (within " + percent(opts.tail_fraction) + ")") +
                        " can run as a post-processing step";
          return true;
        }
        case Scenario::S2_RetrainRewrite: {
          const RewriteRule* rule =
              matching_rule(input, Scenario::S2_RetrainRewrite, p, rules);
          if (!rule) return false;
          a.scenario = s;
          a.rule_id = rule->rule_id;
          a.rationale = base + "; rule '" + rule->rule_id +
                        "' rebuilds the layer from supported ops" +
                        (rule->retraining_required ? "; retraining required"
                                                   : " with exact weight transfer");
          return true;
        }
        case Scenario::S4_CustomOp: {
          a.scenario = s;
          a.rationale =
              base + "; no applicable rewrite and not tail-eligible; implement '" +
              node.op_type + "' as a custom layer in both frameworks";
          return true;
        }
      }
      return false;
    };

    bool assigned = false;
    bool preference_failed = false;
    auto preferred = opts.prefer.find(node.id);
    if (preferred != opts.prefer.end()) {
      assigned = classify_as(preferred->second, /*forced=*/true);
      preference_failed = !assigned;
    }
    if (!assigned) {
      for (Scenario s : opts.priority)
        if (classify_as(s, /*forced=*/false)) {
          assigned = true;
          break;
        }
    }
    if (!assigned) classify_as(Scenario::S4_CustomOp, /*forced=*/false);
    if (preference_failed)
      a.rationale = "preferred scenario '" +
                    std::string(scenario_name(preferred->second)) +
                    "' not applicable; " + a.rationale;
    report.unsupported.push_back(std::move(a));
  }

  report.deployable_as_is =
      report.unsupported.empty() && report.structural_violations.empty();
  return report;
}

std::string report_to_json(const CompatibilityReport& report) {
  json root;
  root["profile_name"] = report.profile_name;
  json rows = json::array();
  for (const auto& a : report.unsupported) {
    json row;
    row["node_id"] = a.node_id;
    row["scenario"] = std::string(scenario_name(a.scenario));
    row["rule_id"] = a.rule_id ? json(*a.rule_id) : json(nullptr);
    row["rationale"] = a.rationale;
    rows.push_back(std::move(row));
  }
  root["unsupported"] = std::move(rows);
  root["structural_violations"] = report.structural_violations;
  root["deployable_as_is"] = report.deployable_as_is;
  return root.dump(2) + "\n";
}

}  // namespace retarget
