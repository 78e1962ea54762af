// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0
//
// Scenario transformations: substitution-rule application, ConvTranspose2D
// rewrites (exact where the parameterization admits it, structural
// otherwise), tail splitting with output fusion, custom-op manifests, and
// the conversion pipeline that strings them together. Every function
// returns new graphs; inputs are never mutated.

#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "retarget/analyzer.hpp"
#include "retarget/interpreter.hpp"
#include "retarget/ir.hpp"
#include "retarget/profiles.hpp"
#include "retarget/rules.hpp"

namespace retarget {

struct RewriteMetadata {
  std::string node_id;
  std::string rule_id;
  bool retraining_required = false;
};

/// Applies one rewrite rule to one node. Replacement values reuse the
/// replaced node's output names (or remap them, for drop rules), so
/// downstream consumers are untouched. The result is validated before it is
/// returned. Throws UsageError when the matcher rejects the node.
Graph apply_rule(const Graph& g, const std::string& node_id, const RewriteRule& rule,
                 RewriteMetadata* meta = nullptr);

enum class DeconvMode { ExactNonOverlap, Structural };

/// Rewrites one ConvTranspose2D node into Conv2D -> Reshape -> Transpose ->
/// Reshape. ExactNonOverlap requires stride == kernel size and pad 0 and
/// transfers the weights exactly (no retraining); Structural works for any
/// parameterization, zero-initializes the new weights and flags the result
/// retraining_required.
Graph rewrite_convtranspose(const Graph& g, const std::string& node_id, DeconvMode mode,
                            RewriteMetadata* meta = nullptr);

struct FusionEntry {
  std::string value_name;
  Shape shape;
  int64_t flat_offset = 0;
  int64_t flat_length = 0;

  bool operator==(const FusionEntry&) const = default;
};

struct SplitArtifacts {
  Graph prefix;       // deployable part (fused when the target needs it)
  Graph postprocess;  // runs outside the deployment framework
  /// One entry per cut tensor, in prefix-output order. Offsets are
  /// contiguous; they describe the fused vector when fusion was applied and
  /// the plain prefix outputs otherwise.
  std::vector<FusionEntry> fusion_manifest;
  std::optional<std::string> fused_output_name;
};

/// Splits the graph at the descendant closure of `seed_node_ids`. Cut
/// tensors (values computed in the prefix and consumed by the suffix,
/// including skip connections, plus prefix-produced graph outputs) become
/// the prefix outputs and the postprocess inputs. Initializers used by the
/// suffix are copied into the postprocess graph. When the profile is
/// single-output-only and there is more than one cut tensor, the prefix
/// outputs are fused and the manifest records how to take them apart again.
SplitArtifacts split_tail(const Graph& g, const std::set<std::string>& seed_node_ids,
                          const CapabilityProfile& p);

struct FusionResult {
  Graph graph;
  std::vector<FusionEntry> manifest;
  std::string fused_output_name;
};

/// Flattens every graph output and concatenates them along axis 0 into a
/// single output. All outputs must share dtype float32.
FusionResult fuse_outputs(const Graph& g);

/// Inverse of fusion on values: slices the fused vector per the manifest and
/// reshapes each piece back to its recorded shape, bit-exactly.
TensorMap defuse(const std::vector<FusionEntry>& manifest, const TensorValue& fused);

struct CustomOpManifest {
  std::string op_type;
  std::vector<std::string> occurrences;  // node ids
  std::vector<TensorSpec> input_signature;   // from the first occurrence
  std::vector<TensorSpec> output_signature;
  std::vector<std::string> required_in;  // always {source label, target profile}
};

/// One manifest per distinct S4 op type in the report: the op must be
/// implemented both in the source framework and in the deployment target.
std::vector<CustomOpManifest> emit_custom_manifest(
    const Graph& g, const CompatibilityReport& report,
    const std::string& source_label = "baseline");

enum class DeconvPolicy { Auto, ExactOnly, StructuralOnly };

struct ConvertOptions {
  AnalyzeOptions analyze;
  DeconvPolicy deconv = DeconvPolicy::Auto;
  std::string source_label = "baseline";
};

struct AppliedRule {
  std::string node_id;
  std::string rule_id;
  bool retraining_required = false;
};

struct ConversionResult {
  Graph converted;  // final deployable graph (the prefix when split)
  std::optional<SplitArtifacts> split;
  std::vector<AppliedRule> applied_rules;
  bool retraining_required = false;
  std::vector<CustomOpManifest> custom_manifests;
  CompatibilityReport residual;  // analysis of the final deployable graph
};

/// Full pipeline: analyze, apply all S1 substitutions, then all S2
/// rewrites, then one tail split over the S3 nodes, then emit custom-op
/// manifests for whatever remains.
ConversionResult convert(const Graph& g, const CapabilityProfile& p,
                         const RuleRegistry& rules, const ConvertOptions& opts = {});

/// Manifest file content for a conversion: fusion manifest, custom-op
/// manifests, the applied-rule log with retraining flags and the residual
/// report. Stable key order.
std::string conversion_manifest_to_json(const ConversionResult& result);

}  // namespace retarget
