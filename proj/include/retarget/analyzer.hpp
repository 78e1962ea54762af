// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0
//
// Compatibility analysis: per-node support verdicts against a capability
// profile, scenario classification, and structural-constraint checks.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "retarget/ir.hpp"
#include "retarget/profiles.hpp"
#include "retarget/rules.hpp"

namespace retarget {

struct ScenarioAssignment {
  std::string node_id;
  Scenario scenario;
  std::optional<std::string> rule_id;  // present iff scenario is S1/S2
  std::string rationale;

  bool operator==(const ScenarioAssignment&) const = default;
};

struct CompatibilityReport {
  std::string profile_name;
  std::vector<ScenarioAssignment> unsupported;  // toposort order
  std::vector<std::string> structural_violations;
  bool deployable_as_is = false;

  bool operator==(const CompatibilityReport&) const = default;
};

struct AnalyzeOptions {
  /// A node is tail-eligible when its descendant closure holds at most this
  /// fraction of all nodes and consumes no graph input directly.
  double tail_fraction = 0.25;

  /// Classification priority. The default prefers solutions that avoid
  /// retraining and leaves custom ops as the last resort.
  std::vector<Scenario> priority = {Scenario::S1_Substitute, Scenario::S3_TailSplit,
                                    Scenario::S2_RetrainRewrite, Scenario::S4_CustomOp};

  /// Per-node scenario overrides (CLI --prefer). A forced S3/S4 is always
  /// honored (split preconditions are then checked by the splitter itself);
  /// a forced S1/S2 falls back to the priority order when no rule matches.
  std::map<std::string, Scenario> prefer;
};

/// Classifies every node failing supports() into exactly one scenario and
/// collects structural violations (multi-output graphs vs single-output
/// targets, inputs exceeding the resolution cap). Deterministic for fixed
/// arguments; shape-inference failures propagate.
CompatibilityReport analyze(const Graph& g, const CapabilityProfile& p,
                            const RuleRegistry& rules, const AnalyzeOptions& opts = {});

/// Stable-key-order JSON rendering of a report.
std::string report_to_json(const CompatibilityReport& report);

}  // namespace retarget
