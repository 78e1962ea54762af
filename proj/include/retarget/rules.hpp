// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0
//
// Rewrite rules: matchers plus builders that produce replacement subgraphs.
// Substitution rules (S1) preserve semantics exactly; retraining rewrites
// (S2) preserve shapes and mark themselves retraining_required unless the
// parameterization admits an exact weight transfer.

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "retarget/ir.hpp"

namespace retarget {

/// The four conversion scenarios for an unsupported operation.
enum class Scenario { S1_Substitute, S2_RetrainRewrite, S3_TailSplit, S4_CustomOp };

std::string_view scenario_name(Scenario s);  // "S1_substitute", ...
std::optional<Scenario> scenario_from_name(std::string_view name);  // accepts "S1" too

/// Deterministic fresh-name source. Every name is `<base>__rw<k>` with the
/// smallest unused k, so repeated conversions of the same graph produce
/// byte-identical artifacts.
class NameAllocator {
 public:
  explicit NameAllocator(std::set<std::string> taken) : taken_(std::move(taken)) {}
  std::string fresh(const std::string& base);

 private:
  std::set<std::string> taken_;
};

/// Everything a matcher/builder may look at. Shapes are precomputed by the
/// caller so matchers stay cheap.
struct RuleInput {
  const Graph& graph;
  const Node& node;
  const std::map<std::string, TensorSpec>& shapes;
};

/// A built replacement. Either `nodes` produce the matched node's output
/// names, or the node is dropped and `value_remap` redirects its outputs to
/// existing values (consumers and graph outputs are rewritten accordingly).
struct RuleApplication {
  std::vector<Node> nodes;
  std::vector<Initializer> initializers;
  std::map<std::string, std::string> value_remap;
  bool retraining_required = false;
};

struct RewriteRule {
  std::string rule_id;
  Scenario scenario;  // S1_Substitute or S2_RetrainRewrite
  std::string summary;
  bool retraining_required = false;
  std::function<bool(const RuleInput&)> matches;
  std::function<RuleApplication(const RuleInput&, NameAllocator& values,
                                NameAllocator& node_ids)>
      build;
};

/// Ordered rule collection; earlier rules win when several match.
class RuleRegistry {
 public:
  void add(RewriteRule rule);
  const RewriteRule* find(std::string_view rule_id) const;
  const std::vector<RewriteRule>& rules() const { return rules_; }

 private:
  std::vector<RewriteRule> rules_;
};

/// Shipped rules, in match-priority order:
///   sub_const_to_add              S1  Sub(x, c) -> Add(x, -c), c constant
///   sub_to_add_neg                S1  Sub(x, y) -> Add(x, Neg(y))
///   dropout_drop                  S1  remove inference-mode Dropout
///   cast_noop_drop                S1  remove Cast to the operand's own dtype
///   convtranspose_to_conv_exact   S2  non-overlapping deconv (stride ==
///                                     kernel, pad 0): exact weight-transfer
///                                     rewrite, no retraining
///   convtranspose_to_conv_structural
///                                 S2  any deconv: shape-preserving rewrite,
///                                     zero-initialized weights, retraining
/// Only the constant-operand Subtract substitution comes straight from
/// practice reports; the other substitutions are extensions of the same
/// principle (their summaries say so).
const RuleRegistry& builtin_rules();

}  // namespace retarget
