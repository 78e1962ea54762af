// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0

#include "retarget/rewriter.hpp"

#include <algorithm>
#include <map>

#include <nlohmann/json.hpp>

namespace retarget {

using nlohmann::json;

namespace {

size_t node_index_by_id(const Graph& g, const std::string& node_id) {
  for (size_t i = 0; i < g.nodes.size(); ++i)
    if (g.nodes[i].id == node_id) return i;
  throw UsageError("no node '" + node_id + "' in graph '" + g.name + "'");
}

std::set<std::string> all_value_names(const Graph& g) {
  std::set<std::string> names;
  for (const auto& in : g.inputs) names.insert(in.name);
  for (const auto& init : g.initializers) names.insert(init.spec.name);
  for (const auto& n : g.nodes)
    for (const auto& out : n.outputs) names.insert(out);
  return names;
}

std::set<std::string> all_node_ids(const Graph& g) {
  std::set<std::string> ids;
  for (const auto& n : g.nodes) ids.insert(n.id);
  return ids;
}

void apply_value_remap(Graph& g, const std::map<std::string, std::string>& remap) {
  if (remap.empty()) return;
  auto rename = [&](std::string& value) {
    auto it = remap.find(value);
    if (it != remap.end()) value = it->second;
  };
  for (auto& n : g.nodes)
    for (auto& in : n.inputs) rename(in);
  for (auto& out : g.outputs) rename(out);
}

}  // namespace

// ---------------------------------------------------------------------------
// apply_rule
// ---------------------------------------------------------------------------

Graph apply_rule(const Graph& g, const std::string& node_id, const RewriteRule& rule,
                 RewriteMetadata* meta) {
  const size_t index = node_index_by_id(g, node_id);
  const auto shapes = infer_shapes(g);
  const RuleInput input{g, g.nodes[index], shapes};
  if (!rule.matches(input))
    throw UsageError("rule '" + rule.rule_id + "' does not match node '" + node_id +
                     "' (op '" + g.nodes[index].op_type + "')");

  NameAllocator values(all_value_names(g));
  NameAllocator node_ids(all_node_ids(g));
  RuleApplication app = rule.build(input, values, node_ids);

  Graph out = g;
  out.nodes.erase(out.nodes.begin() + static_cast<ptrdiff_t>(index));
  out.nodes.insert(out.nodes.begin() + static_cast<ptrdiff_t>(index),
                   app.nodes.begin(), app.nodes.end());
  for (auto& init : app.initializers) out.initializers.push_back(std::move(init));
  apply_value_remap(out, app.value_remap);

  validate(out);
  if (meta) *meta = {node_id, rule.rule_id, app.retraining_required};
  return out;
}

Graph rewrite_convtranspose(const Graph& g, const std::string& node_id, DeconvMode mode,
                            RewriteMetadata* meta) {
  const Node& node = g.nodes[node_index_by_id(g, node_id)];
  if (node.op_type != "ConvTranspose2D")
    throw UsageError("node '" + node_id + "' is a '" + node.op_type +
                     "', not a ConvTranspose2D");
  const char* rule_id = mode == DeconvMode::ExactNonOverlap
                            ? "convtranspose_to_conv_exact"
                            : "convtranspose_to_conv_structural";
  const RewriteRule* rule = builtin_rules().find(rule_id);
  if (mode == DeconvMode::ExactNonOverlap) {
    const auto shapes = infer_shapes(g);
    if (!rule->matches({g, node, shapes})) {
      auto [sh, sw] = node.attr_int_pair_or("stride", 1);
      auto [ph, pw] = node.attr_int_pair_or("pad", 0);
      const Shape& w = shapes.at(node.inputs[1]).shape;
      throw UsageError(
          "node '" + node_id +
          "': the exact rewrite needs a non-overlapping deconvolution (stride == "
          "kernel size, pad 0) with constant weights; got kernel " +
          std::to_string(w[2]) + "x" + std::to_string(w[3]) + ", stride " +
          std::to_string(sh) + "," + std::to_string(sw) + ", pad " + std::to_string(ph) +
          "," + std::to_string(pw) + ". Use the structural mode (requires retraining).");
    }
  }
  return apply_rule(g, node_id, *rule, meta);
}

// ---------------------------------------------------------------------------
// Tail split
// ---------------------------------------------------------------------------

SplitArtifacts split_tail(const Graph& g, const std::set<std::string>& seed_node_ids,
                          const CapabilityProfile& p) {
  const GraphIndex idx = index_graph(g);
  const auto shapes = infer_shapes(g);
  const auto order = toposort(g);

  std::set<size_t> seeds;
  for (const auto& id : seed_node_ids) seeds.insert(node_index_by_id(g, id));
  const std::set<size_t> suffix = descendant_closure(g, idx, seeds);
  if (!g.nodes.empty() && suffix.size() == g.nodes.size())
    throw UsageError(
        "tail closure covers all nodes; no deployable prefix remains (consider a "
        "custom-op implementation instead)");

  // Cut tensors: consumed by the suffix but produced by a prefix node, plus
  // prefix-side graph outputs that must pass through the post-processing
  // stage. Initializers feeding the suffix are copied, not cut.
  std::set<std::string> cut_set;
  for (size_t i : suffix) {
    for (const auto& in : g.nodes[i].inputs) {
      const Producer& prod = idx.producers.at(in);
      switch (prod.kind) {
        case Producer::GraphInput:
          throw UsageError("tail node '" + g.nodes[i].id + "' consumes graph input '" +
                           in + "' directly; the suffix must feed on computed values");
        case Producer::InitializerValue:
          break;
        case Producer::NodeOutput:
          if (!suffix.count(prod.index)) cut_set.insert(in);
          break;
      }
    }
  }
  for (const auto& out : g.outputs) {
    const Producer& prod = idx.producers.at(out);
    if (prod.kind != Producer::NodeOutput || !suffix.count(prod.index))
      cut_set.insert(out);
  }

  // Cut tensor order: graph outputs that pass through keep their declared
  // order (so an empty split leaves the graph unchanged), then the remaining
  // cuts follow their producers' topological order, ties by name.
  std::vector<size_t> topo_pos(g.nodes.size());
  for (size_t pos = 0; pos < order.size(); ++pos) topo_pos[order[pos]] = pos;
  std::vector<std::string> cut;
  std::set<std::string> placed;
  for (const auto& out : g.outputs)
    if (cut_set.count(out) && placed.insert(out).second) cut.push_back(out);
  std::vector<std::string> rest;
  for (const auto& name : cut_set)
    if (!placed.count(name)) rest.push_back(name);
  auto rank_of = [&](const std::string& name) -> int64_t {
    const Producer& prod = idx.producers.at(name);
    switch (prod.kind) {
      case Producer::GraphInput: return -2;
      case Producer::InitializerValue: return -1;
      case Producer::NodeOutput: return static_cast<int64_t>(topo_pos[prod.index]);
    }
    return 0;
  };
  std::sort(rest.begin(), rest.end(), [&](const std::string& a, const std::string& b) {
    return std::make_pair(rank_of(a), a) < std::make_pair(rank_of(b), b);
  });
  cut.insert(cut.end(), rest.begin(), rest.end());

  SplitArtifacts artifacts;

  Graph& prefix = artifacts.prefix;
  prefix.name = g.name;
  prefix.inputs = g.inputs;
  prefix.outputs = cut;
  std::set<std::string> suffix_only_inits;
  {
    std::set<std::string> suffix_needs, prefix_needs;
    for (size_t i = 0; i < g.nodes.size(); ++i)
      for (const auto& in : g.nodes[i].inputs)
        (suffix.count(i) ? suffix_needs : prefix_needs).insert(in);
    for (const auto& init : g.initializers) {
      const std::string& name = init.spec.name;
      if (suffix_needs.count(name) && !prefix_needs.count(name) && !cut_set.count(name))
        suffix_only_inits.insert(name);
    }
  }
  for (size_t i = 0; i < g.nodes.size(); ++i)
    if (!suffix.count(i)) prefix.nodes.push_back(g.nodes[i]);
  for (const auto& init : g.initializers)
    if (!suffix_only_inits.count(init.spec.name)) prefix.initializers.push_back(init);

  Graph& post = artifacts.postprocess;
  post.name = g.name + "__post";
  for (const auto& name : cut) {
    TensorSpec spec = shapes.at(name);
    spec.name = name;
    post.inputs.push_back(spec);
  }
  post.outputs = g.outputs;
  std::set<std::string> post_needs;
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    if (!suffix.count(i)) continue;
    post.nodes.push_back(g.nodes[i]);
    for (const auto& in : g.nodes[i].inputs) post_needs.insert(in);
  }
  for (const auto& init : g.initializers)
    if (post_needs.count(init.spec.name)) post.initializers.push_back(init);

  validate(prefix);
  validate(post);

  int64_t offset = 0;
  for (const auto& name : cut) {
    const TensorSpec& spec = shapes.at(name);
    FusionEntry entry{name, spec.shape, offset, numel(spec.shape)};
    offset += entry.flat_length;
    artifacts.fusion_manifest.push_back(std::move(entry));
  }

  if (p.single_output_only && cut.size() > 1) {
    FusionResult fused = fuse_outputs(prefix);
    artifacts.prefix = std::move(fused.graph);
    artifacts.fusion_manifest = std::move(fused.manifest);
    artifacts.fused_output_name = fused.fused_output_name;
  }
  return artifacts;
}

// ---------------------------------------------------------------------------
// Output fusion / de-fusion
// ---------------------------------------------------------------------------

FusionResult fuse_outputs(const Graph& g) {
  if (g.outputs.empty()) throw UsageError("fuse_outputs: graph has no outputs");
  const auto shapes = infer_shapes(g);
  for (const auto& out : g.outputs)
    if (shapes.at(out).dtype != DType::Float32)
      throw UsageError("fuse_outputs: mixed or non-float32 output dtypes ('" + out +
                       "' is " + std::string(dtype_name(shapes.at(out).dtype)) + ")");

  FusionResult result;
  result.graph = g;
  NameAllocator values(all_value_names(g));
  NameAllocator node_ids(all_node_ids(g));

  std::vector<std::string> flat_names;
  int64_t offset = 0;
  for (const auto& out : g.outputs) {
    const std::string flat = values.fresh(out);
    result.graph.nodes.push_back(
        Node{node_ids.fresh("fuse_flatten"), "Flatten", {out}, {flat}, {}});
    flat_names.push_back(flat);
    const TensorSpec& spec = shapes.at(out);
    result.manifest.push_back(FusionEntry{out, spec.shape, offset, numel(spec.shape)});
    offset += numel(spec.shape);
  }
  result.fused_output_name = values.fresh("fused");
  result.graph.nodes.push_back(Node{node_ids.fresh("fuse_concat"),
                                    "Concat",
                                    flat_names,
                                    {result.fused_output_name},
                                    {{"axis", int64_t{0}}}});
  result.graph.outputs = {result.fused_output_name};

  validate(result.graph);
  return result;
}

TensorMap defuse(const std::vector<FusionEntry>& manifest, const TensorValue& fused) {
  int64_t total = 0;
  for (const auto& entry : manifest) total += entry.flat_length;
  if (fused.size() != total)
    throw UsageError("defuse: fused tensor has " + std::to_string(fused.size()) +
                     " elements, manifest expects " + std::to_string(total));

  TensorMap out;
  for (const auto& entry : manifest) {
    TensorValue piece = TensorValue::zeros(fused.dtype, entry.shape);
    std::visit(
        [&](auto& dst) {
          using Vec = std::decay_t<decltype(dst)>;
          const Vec& src = std::get<Vec>(fused.data);
          std::copy(src.begin() + entry.flat_offset,
                    src.begin() + entry.flat_offset + entry.flat_length, dst.begin());
        },
        piece.data);
    out[entry.value_name] = std::move(piece);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Custom-op manifests
// ---------------------------------------------------------------------------

std::vector<CustomOpManifest> emit_custom_manifest(const Graph& g,
                                                   const CompatibilityReport& report,
                                                   const std::string& source_label) {
  const auto shapes = infer_shapes(g);
  std::map<std::string, size_t> index_by_id;
  for (size_t i = 0; i < g.nodes.size(); ++i) index_by_id[g.nodes[i].id] = i;

  std::vector<CustomOpManifest> manifests;
  std::map<std::string, size_t> by_op;  // op_type -> position in `manifests`
  for (const auto& a : report.unsupported) {
    if (a.scenario != Scenario::S4_CustomOp) continue;
    const Node& node = g.nodes[index_by_id.at(a.node_id)];
    auto it = by_op.find(node.op_type);
    if (it == by_op.end()) {
      CustomOpManifest m;
      m.op_type = node.op_type;
      for (const auto& in : node.inputs) m.input_signature.push_back(shapes.at(in));
      for (const auto& out : node.outputs) m.output_signature.push_back(shapes.at(out));
      m.required_in = {source_label, report.profile_name};
      by_op.emplace(node.op_type, manifests.size());
      manifests.push_back(std::move(m));
      it = by_op.find(node.op_type);
    }
    manifests[it->second].occurrences.push_back(a.node_id);
  }
  return manifests;
}

// ---------------------------------------------------------------------------
// convert
// ---------------------------------------------------------------------------

ConversionResult convert(const Graph& g, const CapabilityProfile& p,
                         const RuleRegistry& rules, const ConvertOptions& opts) {
  validate(g);
  const CompatibilityReport report = analyze(g, p, rules, opts.analyze);

  ConversionResult result;
  Graph work = g;

  auto apply_assignment = [&](const ScenarioAssignment& a) {
    std::string rule_id = *a.rule_id;
    if (a.scenario == Scenario::S2_RetrainRewrite) {
      const bool is_deconv_rule = rule_id == "convtranspose_to_conv_exact" ||
                                  rule_id == "convtranspose_to_conv_structural";
      if (is_deconv_rule) {
        if (opts.deconv == DeconvPolicy::StructuralOnly)
          rule_id = "convtranspose_to_conv_structural";
        if (opts.deconv == DeconvPolicy::ExactOnly &&
            rule_id != "convtranspose_to_conv_exact") {
          RewriteMetadata meta;
          work = rewrite_convtranspose(work, a.node_id, DeconvMode::ExactNonOverlap,
                                       &meta);  // throws with an explanation
          result.applied_rules.push_back({meta.node_id, meta.rule_id,
                                          meta.retraining_required});
          return;
        }
      }
    }
    const RewriteRule* rule = rules.find(rule_id);
    if (!rule) throw InternalError("assignment references unknown rule '" + rule_id + "'");
    RewriteMetadata meta;
    work = apply_rule(work, a.node_id, *rule, &meta);
    result.applied_rules.push_back({meta.node_id, meta.rule_id, meta.retraining_required});
  };

  for (const auto& a : report.unsupported)
    if (a.scenario == Scenario::S1_Substitute) apply_assignment(a);
  for (const auto& a : report.unsupported)
    if (a.scenario == Scenario::S2_RetrainRewrite) apply_assignment(a);

  std::set<std::string> seeds;
  for (const auto& a : report.unsupported)
    if (a.scenario == Scenario::S3_TailSplit) seeds.insert(a.node_id);
  if (!seeds.empty()) {
    result.split = split_tail(work, seeds, p);
    result.converted = result.split->prefix;
  } else {
    result.converted = work;
  }

  for (const auto& applied : result.applied_rules)
    if (applied.retraining_required) result.retraining_required = true;

  result.residual = analyze(result.converted, p, rules, opts.analyze);
  result.custom_manifests =
      emit_custom_manifest(result.converted, result.residual, opts.source_label);
  return result;
}

std::string conversion_manifest_to_json(const ConversionResult& result) {
  json root;

  json rules = json::array();
  for (const auto& r : result.applied_rules) {
    json jr;
    jr["node_id"] = r.node_id;
    jr["rule_id"] = r.rule_id;
    jr["retraining_required"] = r.retraining_required;
    rules.push_back(std::move(jr));
  }
  root["applied_rules"] = std::move(rules);
  root["retraining_required"] = result.retraining_required;

  json fusion = json::array();
  if (result.split) {
    for (const auto& entry : result.split->fusion_manifest) {
      json je;
      je["value_name"] = entry.value_name;
      je["shape"] = entry.shape;
      je["flat_offset"] = entry.flat_offset;
      je["flat_length"] = entry.flat_length;
      fusion.push_back(std::move(je));
    }
  }
  root["fusion_manifest"] = std::move(fusion);
  root["fused_output_name"] = result.split && result.split->fused_output_name
                                  ? json(*result.split->fused_output_name)
                                  : json(nullptr);

  auto specs_to_json = [](const std::vector<TensorSpec>& specs) {
    json arr = json::array();
    for (const auto& s : specs) {
      json js;
      js["name"] = s.name;
      js["dtype"] = std::string(dtype_name(s.dtype));
      js["shape"] = s.shape;
      arr.push_back(std::move(js));
    }
    return arr;
  };
  json customs = json::array();
  for (const auto& m : result.custom_manifests) {
    json jm;
    jm["op_type"] = m.op_type;
    jm["occurrences"] = m.occurrences;
    jm["inputs"] = specs_to_json(m.input_signature);
    jm["outputs"] = specs_to_json(m.output_signature);
    jm["required_in"] = m.required_in;
    customs.push_back(std::move(jm));
  }
  root["custom_ops"] = std::move(customs);

  root["residual"] = json::parse(report_to_json(result.residual));
  return root.dump(2) + "\n";
}

}  // namespace retarget
