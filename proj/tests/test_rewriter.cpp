// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "retarget/harness.hpp"
#include "retarget/rewriter.hpp"
#include "test_util.hpp"

using namespace retarget;
using namespace retarget::testing;

namespace {

const CapabilityProfile& profile(const std::string& name) {
  for (const auto& p : builtin_profiles())
    if (p.name == name) return p;
  throw std::logic_error("no builtin " + name);
}

size_t count_op(const Graph& g, const std::string& op) {
  size_t n = 0;
  for (const auto& node : g.nodes)
    if (node.op_type == op) ++n;
  return n;
}

// The node chain that replaced `replaced_output`, walked backwards from the
// node that now produces it.
std::vector<std::string> chain_ops_ending_at(const Graph& g, const std::string& value) {
  const GraphIndex idx = index_graph(g);
  std::vector<std::string> ops;
  std::string current = value;
  while (true) {
    auto it = idx.producers.find(current);
    if (it == idx.producers.end() || it->second.kind != Producer::NodeOutput) break;
    const Node& n = g.nodes[it->second.index];
    ops.push_back(n.op_type);
    if (n.inputs.empty()) break;
    current = n.inputs[0];
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

}  // namespace

TEST_CASE("sub_const_to_add: negates the constant and preserves values") {
  Graph g;
  g.name = "subc";
  g.inputs.push_back({"x", DType::Float32, {1}});
  g.initializers.push_back(f32_init("c", {1}, {0.25f}));
  g.nodes.push_back(Node{"sub0", "Sub", {"x", "c"}, {"y"}, {}});
  g.outputs = {"y"};
  validate(g);

  RewriteMetadata meta;
  Graph out = apply_rule(g, "sub0", *builtin_rules().find("sub_const_to_add"), &meta);
  CHECK(count_op(out, "Sub") == 0);
  CHECK(count_op(out, "Add") == 1);
  CHECK(out.nodes.size() == g.nodes.size());
  CHECK_FALSE(meta.retraining_required);

  auto before = run_graph(g, {{"x", TensorValue::f32({1}, {1.0f})}});
  auto after = run_graph(out, {{"x", TensorValue::f32({1}, {1.0f})}});
  CHECK(before.at("y").floats()[0] == doctest::Approx(0.75f));
  CHECK(before.at("y") == after.at("y"));

  // the new initializer really is the negation
  bool found = false;
  for (const auto& init : out.initializers)
    if (init.spec.name != "c" && init.spec.shape == Shape{1}) {
      CHECK(std::get<std::vector<float>>(init.data)[0] == -0.25f);
      found = true;
    }
  CHECK(found);
}

TEST_CASE("sub_const_to_add: rejects non-constant operands") {
  Graph g;
  g.name = "subv";
  g.inputs.push_back({"x", DType::Float32, {1}});
  g.inputs.push_back({"y", DType::Float32, {1}});
  g.nodes.push_back(Node{"sub0", "Sub", {"x", "y"}, {"z"}, {}});
  g.outputs = {"z"};
  validate(g);
  CHECK_THROWS_WITH_AS(apply_rule(g, "sub0", *builtin_rules().find("sub_const_to_add")),
                       doctest::Contains("does not match"), UsageError);
}

TEST_CASE("sub_to_add_neg: exact for non-constant operands") {
  Graph g;
  g.name = "subv";
  g.inputs.push_back({"x", DType::Float32, {4}});
  g.inputs.push_back({"y", DType::Float32, {4}});
  g.nodes.push_back(Node{"sub0", "Sub", {"x", "y"}, {"z"}, {}});
  g.outputs = {"z"};
  validate(g);

  Graph out = apply_rule(g, "sub0", *builtin_rules().find("sub_to_add_neg"));
  CHECK(count_op(out, "Sub") == 0);
  CHECK(count_op(out, "Neg") == 1);
  auto report = diff_graphs(g, out, 10, 0.0, 7);
  CHECK(report.pass);
}

TEST_CASE("drop rules: dropout and no-op cast disappear, values untouched") {
  Graph g = load_model_file(fixture_path("cast_dropout.nng.json"));
  Graph step1 = apply_rule(g, "drop0", *builtin_rules().find("dropout_drop"));
  CHECK(count_op(step1, "Dropout") == 0);
  CHECK(step1.nodes.size() == g.nodes.size() - 1);
  Graph step2 = apply_rule(step1, "cast0", *builtin_rules().find("cast_noop_drop"));
  CHECK(count_op(step2, "Cast") == 0);

  auto report = diff_graphs(g, step2, 10, 0.0, 3);
  CHECK(report.pass);
  CHECK(report.worst_abs_diff == 0.0);
}

TEST_CASE("cast_noop_drop: does not match a real cast") {
  Graph g;
  g.name = "realcast";
  g.inputs.push_back({"x", DType::Float32, {2}});
  g.nodes.push_back(Node{"c0", "Cast", {"x"}, {"y"}, {{"to", std::string("int64")}}});
  g.outputs = {"y"};
  validate(g);
  CHECK_THROWS_AS(apply_rule(g, "c0", *builtin_rules().find("cast_noop_drop")),
                  UsageError);
}

TEST_CASE("sub-const pipeline: conversion removes Sub and is numerically sound") {
  Graph g = load_model_file(fixture_path("sub_const.nng.json"));
  auto result = convert(g, profile("mobile-strict"), builtin_rules());
  CHECK(count_op(result.converted, "Sub") == 0);
  CHECK(result.converted.nodes.size() == g.nodes.size());
  CHECK_FALSE(result.retraining_required);
  auto report = diff_graphs(g, result.converted, 20, 1e-6, 1);
  CHECK(report.pass);
}

TEST_CASE("exact deconv rewrite matches the scatter oracle") {
  // includes the k=1,s=1 degenerate case (channel-swapped 1x1 conv)
  for (auto [k, ch, sp] : std::vector<std::tuple<int64_t, int64_t, int64_t>>{
           {1, 2, 5}, {2, 3, 5}, {3, 2, 4}, {2, 4, 8}}) {
    Graph g = single_deconv_graph(ch, ch, sp, k, /*stride=*/k, /*pad=*/0,
                                  static_cast<uint64_t>(k * 100 + sp));
    RewriteMetadata meta;
    Graph rewritten =
        rewrite_convtranspose(g, "deconv0", DeconvMode::ExactNonOverlap, &meta);
    CHECK_FALSE(meta.retraining_required);
    CHECK(count_op(rewritten, "ConvTranspose2D") == 0);

    const auto x =
        random_floats(static_cast<size_t>(ch * sp * sp), static_cast<uint64_t>(sp));
    auto out = run_graph(rewritten, {{"x", TensorValue::f32({1, ch, sp, sp}, x)}});
    OracleResult expect = convtranspose2d_oracle(
        x, {1, ch, sp, sp}, std::get<std::vector<float>>(g.initializers[0].data),
        g.initializers[0].spec.shape, k, 0);
    REQUIRE(out.at("y").shape == expect.shape);
    CHECK(max_abs_diff(out.at("y").floats(), expect.data) <= 1e-6);
  }
}

TEST_CASE("exact deconv rewrite: output shape example") {
  Graph g = single_deconv_graph(4, 3, 5, 2, 2, 0, 9);
  Graph rewritten = rewrite_convtranspose(g, "deconv0", DeconvMode::ExactNonOverlap);
  CHECK(infer_shapes(rewritten).at("y").shape == Shape{1, 3, 10, 10});
}

TEST_CASE("exact deconv rewrite refuses overlapping parameterizations") {
  Graph g = single_deconv_graph(2, 2, 5, 3, 2, 0, 5);
  CHECK_THROWS_WITH_AS(rewrite_convtranspose(g, "deconv0", DeconvMode::ExactNonOverlap),
                       doctest::Contains("non-overlapping"), UsageError);
}

TEST_CASE("structural deconv rewrite: shape-preserving, flagged for retraining") {
  Graph g = load_model_file(fixture_path("deconv_structural.nng.json"));
  const auto before = infer_shapes(g);

  RewriteMetadata meta;
  Graph rewritten = rewrite_convtranspose(g, "deconv0", DeconvMode::Structural, &meta);
  CHECK(meta.retraining_required);
  const auto after = infer_shapes(rewritten);
  for (const auto& out : g.outputs) {
    CHECK(after.at(out).shape == before.at(out).shape);
    CHECK(after.at(out).dtype == before.at(out).dtype);
  }

  // exactly the Conv -> Reshape -> Transpose -> Reshape pattern feeds the
  // deconv's old output
  auto ops = chain_ops_ending_at(rewritten, "up");
  REQUIRE(ops.size() >= 4);
  const std::vector<std::string> tail(ops.end() - 4, ops.end());
  CHECK(tail == std::vector<std::string>{"Conv2D", "Reshape", "Transpose", "Reshape"});
}

TEST_CASE("structural deconv rewrite: sub-pixel case uses a depth-to-space tail") {
  // k=4, s=2, p=1 gives exactly 2x upsampling
  Graph g = single_deconv_graph(2, 3, 5, 4, 2, 1, 21);
  Graph rewritten = rewrite_convtranspose(g, "deconv0", DeconvMode::Structural);
  CHECK(infer_shapes(rewritten).at("y").shape == Shape{1, 3, 10, 10});
  // conv emits Cout*s*s channels ahead of the shuffle
  bool found = false;
  for (const auto& n : rewritten.nodes)
    if (n.op_type == "Conv2D" && n.id.find("deconv0") == 0) {
      const auto w = infer_shapes(rewritten).at(n.inputs[1]).shape;
      CHECK(w[0] == 3 * 2 * 2);
      found = true;
    }
  CHECK(found);
}

TEST_CASE("split_tail: empty seeds leave the graph intact") {
  Graph g = load_model_file(fixture_path("tail_postprocess.nng.json"));
  SplitArtifacts s = split_tail(g, {}, profile("full"));
  CHECK(s.prefix == g);
  CHECK(s.postprocess.nodes.empty());
  CHECK_FALSE(s.fused_output_name.has_value());
  auto report = diff_split(g, s, 5, 0.0, 2);
  CHECK(report.pass);
}

TEST_CASE("split_tail: skip connections become cut tensors") {
  Graph g = load_model_file(fixture_path("tail_postprocess.nng.json"));
  SplitArtifacts s = split_tail(g, {"n11_softmax", "n12_sub"}, profile("full"));

  CHECK(s.prefix.outputs == std::vector<std::string>{"v8", "v10"});
  CHECK(s.postprocess.nodes.size() == 3);  // Softmax, Sub, Mul
  CHECK_FALSE(s.fused_output_name.has_value());
  REQUIRE(s.fusion_manifest.size() == 2);
  CHECK(s.fusion_manifest[0].value_name == "v8");
  CHECK(s.fusion_manifest[0].flat_offset == 0);
  CHECK(s.fusion_manifest[0].flat_length == 72);
  CHECK(s.fusion_manifest[1].flat_offset == 72);

  // partition: prefix + postprocess node ids = original ids exactly once
  std::set<std::string> ids;
  for (const auto& n : s.prefix.nodes) CHECK(ids.insert(n.id).second);
  for (const auto& n : s.postprocess.nodes) CHECK(ids.insert(n.id).second);
  std::set<std::string> original;
  for (const auto& n : g.nodes) original.insert(n.id);
  CHECK(ids == original);

  auto report = diff_split(g, s, 20, 1e-6, 4);
  CHECK(report.pass);
}

TEST_CASE("split_tail: single-output targets get fused prefix outputs") {
  Graph g = load_model_file(fixture_path("tail_postprocess.nng.json"));
  SplitArtifacts s = split_tail(g, {"n11_softmax", "n12_sub"}, profile("tnn"));
  CHECK(s.prefix.outputs.size() == 1);
  REQUIRE(s.fused_output_name.has_value());
  CHECK(s.prefix.outputs[0] == *s.fused_output_name);
  CHECK(infer_shapes(s.prefix).at(*s.fused_output_name).shape == Shape{144});

  auto report = diff_split(g, s, 20, 1e-6, 4);
  CHECK(report.pass);
  validate(s.prefix);
  validate(s.postprocess);
}

TEST_CASE("split_tail: errors") {
  Graph g = load_model_file(fixture_path("tail_postprocess.nng.json"));
  CHECK_THROWS_WITH_AS(split_tail(g, {"ghost"}, profile("full")),
                       doctest::Contains("no node"), UsageError);
  CHECK_THROWS_WITH_AS(split_tail(g, {"n01_conv_a"}, profile("full")),
                       doctest::Contains("covers all nodes"), UsageError);

  // a tail consuming a graph input directly cannot split
  Graph h;
  h.name = "direct";
  h.inputs.push_back({"x", DType::Float32, {4}});
  h.nodes.push_back(Node{"r0", "Relu", {"x"}, {"a"}, {}});
  h.nodes.push_back(Node{"r1", "Relu", {"x"}, {"b"}, {}});
  h.nodes.push_back(Node{"m0", "Mul", {"a", "b"}, {"c"}, {}});
  h.outputs = {"c"};
  validate(h);
  CHECK_THROWS_WITH_AS(split_tail(h, {"r1"}, profile("full")),
                       doctest::Contains("graph input"), UsageError);
}

TEST_CASE("fuse_outputs: offsets, lengths, and the single-output case") {
  Graph g;
  g.name = "two";
  g.inputs.push_back({"x", DType::Float32, {2, 3}});
  g.inputs.push_back({"y", DType::Float32, {4}});
  g.nodes.push_back(Node{"r0", "Relu", {"x"}, {"a"}, {}});
  g.nodes.push_back(Node{"r1", "Relu", {"y"}, {"b"}, {}});
  g.outputs = {"a", "b"};
  validate(g);

  FusionResult fused = fuse_outputs(g);
  CHECK(fused.graph.outputs.size() == 1);
  CHECK(infer_shapes(fused.graph).at(fused.fused_output_name).shape == Shape{10});
  REQUIRE(fused.manifest.size() == 2);
  CHECK(fused.manifest[0].flat_offset == 0);
  CHECK(fused.manifest[0].flat_length == 6);
  CHECK(fused.manifest[1].flat_offset == 6);
  CHECK(fused.manifest[1].flat_length == 4);

  Graph single;
  single.name = "one";
  single.inputs.push_back({"x", DType::Float32, {3}});
  single.nodes.push_back(Node{"r0", "Relu", {"x"}, {"a"}, {}});
  single.outputs = {"a"};
  validate(single);
  FusionResult one = fuse_outputs(single);
  REQUIRE(one.manifest.size() == 1);
  CHECK(one.manifest[0].flat_offset == 0);
  validate(one.graph);
}

TEST_CASE("fuse_outputs: mixed dtypes are rejected") {
  Graph g;
  g.name = "mixed";
  g.inputs.push_back({"x", DType::Float32, {2}});
  g.nodes.push_back(Node{"c0", "Cast", {"x"}, {"i"}, {{"to", std::string("int64")}}});
  g.nodes.push_back(Node{"r0", "Relu", {"x"}, {"f"}, {}});
  g.outputs = {"f", "i"};
  validate(g);
  CHECK_THROWS_AS(fuse_outputs(g), UsageError);
}

TEST_CASE("defuse: round-trip, empty case, and length errors") {
  std::vector<FusionEntry> manifest = {{"p", {2, 3}, 0, 6}, {"q", {4}, 6, 4}};
  const auto data = random_floats(10, 77);
  TensorValue fused = TensorValue::f32({10}, data);

  TensorMap pieces = defuse(manifest, fused);
  REQUIRE(pieces.size() == 2);
  CHECK(pieces.at("p").shape == Shape{2, 3});
  CHECK(pieces.at("q").shape == Shape{4});
  // bit-exact re-assembly
  std::vector<float> reassembled = pieces.at("p").floats();
  const auto& q = pieces.at("q").floats();
  reassembled.insert(reassembled.end(), q.begin(), q.end());
  CHECK(reassembled == data);

  CHECK(defuse({}, TensorValue::f32({0}, {})).empty());
  CHECK_THROWS_AS(defuse(manifest, TensorValue::f32({3}, {1, 2, 3})), UsageError);
}

TEST_CASE("emit_custom_manifest: groups occurrences per op type") {
  Graph g = load_model_file(fixture_path("custom_op.nng.json"));
  auto report = analyze(g, profile("tnn"), builtin_rules());
  auto manifests = emit_custom_manifest(g, report, "baseline");
  REQUIRE(manifests.size() == 1);
  CHECK(manifests[0].op_type == "Custom:warp");
  CHECK(manifests[0].occurrences ==
        std::vector<std::string>{"k01_warp_a", "k03_warp_b"});
  REQUIRE(manifests[0].required_in.size() == 2);
  CHECK(manifests[0].required_in[0] == "baseline");
  CHECK(manifests[0].required_in[1] == "tnn");
  CHECK(manifests[0].input_signature.size() == 1);

  CompatibilityReport empty;
  empty.profile_name = "tnn";
  CHECK(emit_custom_manifest(g, empty).empty());
}

TEST_CASE("convert: deployable graphs pass through unchanged") {
  Graph g = load_model_file(fixture_path("tail_postprocess.nng.json"));
  auto result = convert(g, profile("full"), builtin_rules());
  CHECK(result.converted == g);
  CHECK(result.applied_rules.empty());
  CHECK_FALSE(result.split.has_value());
  CHECK(result.residual.deployable_as_is);
}

TEST_CASE("convert: composite fixture ends fully supported") {
  Graph g = load_model_file(fixture_path("composite.nng.json"));
  auto result = convert(g, profile("mobile-strict"), builtin_rules());
  REQUIRE(result.split.has_value());
  for (const auto& n : result.converted.nodes)
    CHECK(supports(profile("mobile-strict"), n));
  CHECK(result.residual.deployable_as_is);
  CHECK_FALSE(result.retraining_required);

  auto report = diff_split(g, *result.split, 20, 1e-6, 11);
  CHECK(report.pass);

  // every transformation output is validation-clean
  validate(result.converted);
  validate(result.split->postprocess);
}

TEST_CASE("convert: forced split on a whole-graph closure explains itself") {
  Graph g;
  g.name = "lonely";
  g.inputs.push_back({"x", DType::Float32, {2}});
  g.nodes.push_back(Node{"s0", "Softmax", {"x"}, {"y"}, {{"axis", int64_t{0}}}});
  g.outputs = {"y"};
  validate(g);

  ConvertOptions opts;
  opts.analyze.prefer["s0"] = Scenario::S3_TailSplit;
  CHECK_THROWS_WITH_AS(convert(g, profile("mobile-strict"), builtin_rules(), opts),
                       doctest::Contains("covers all nodes"), UsageError);

  // without the preference the node falls back to a custom-op manifest
  auto result = convert(g, profile("mobile-strict"), builtin_rules());
  REQUIRE(result.custom_manifests.size() == 1);
  CHECK(result.custom_manifests[0].op_type == "Softmax");
  CHECK_FALSE(result.residual.deployable_as_is);
  for (const auto& a : result.residual.unsupported)
    CHECK(a.scenario == Scenario::S4_CustomOp);  // residual lists only S4
}

TEST_CASE("convert: structural-only policy forces zero-weight rewrites") {
  Graph g = load_model_file(fixture_path("deconv_exact.nng.json"));
  ConvertOptions opts;
  opts.deconv = DeconvPolicy::StructuralOnly;
  auto result = convert(g, profile("mobile-strict"), builtin_rules(), opts);
  CHECK(result.retraining_required);
  REQUIRE(result.applied_rules.size() == 1);
  CHECK(result.applied_rules[0].rule_id == "convtranspose_to_conv_structural");
}

TEST_CASE("convert: exact-only policy rejects overlapping deconvs") {
  Graph g = load_model_file(fixture_path("deconv_structural.nng.json"));
  ConvertOptions opts;
  opts.deconv = DeconvPolicy::ExactOnly;
  CHECK_THROWS_AS(convert(g, profile("mobile-strict"), builtin_rules(), opts),
                  UsageError);
}

TEST_CASE("property: every shipped S1 rule is sound on 20 random matching graphs") {
  auto check_sound = [](const Graph& g, const std::string& node_id,
                        const std::string& rule_id, uint64_t seed) {
    const Graph original = g;
    Graph out = apply_rule(g, node_id, *builtin_rules().find(rule_id));
    CHECK(g == original);  // inputs are never mutated
    auto report = diff_graphs(g, out, 20, 1e-6, seed);
    CHECK(report.pass);
  };

  GenParams with_sub;
  with_sub.node_count = 6;
  with_sub.must_include = {"Sub"};
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Graph g = gen_random_graph(seed, with_sub);
    for (const auto& n : g.nodes)
      if (n.op_type == "Sub") {
        if (is_constant(g, n.inputs[1]))
          check_sound(g, n.id, "sub_const_to_add", seed);
        check_sound(g, n.id, "sub_to_add_neg", seed);
        break;
      }
  }

  GenParams with_dropout;
  with_dropout.node_count = 6;
  with_dropout.must_include = {"Dropout"};
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Graph g = gen_random_graph(seed, with_dropout);
    for (const auto& n : g.nodes)
      if (n.op_type == "Dropout") {
        check_sound(g, n.id, "dropout_drop", seed);
        break;
      }
  }

  // cast_noop_drop needs a same-dtype Cast, which the generator never emits;
  // plant one on a float32 leaf.
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Graph g = gen_random_graph(seed, {});
    const auto specs = infer_shapes(g);
    std::string leaf;
    for (const auto& out : g.outputs)
      if (specs.at(out).dtype == DType::Float32) leaf = out;
    if (leaf.empty()) continue;
    g.nodes.push_back(
        Node{"noop_cast", "Cast", {leaf}, {"casted"}, {{"to", std::string("float32")}}});
    std::replace(g.outputs.begin(), g.outputs.end(), leaf, std::string("casted"));
    validate(g);
    check_sound(g, "noop_cast", "cast_noop_drop", seed);
  }
}

TEST_CASE("rewrites keep single assignment on random graphs") {
  GenParams params;
  params.node_count = 8;
  params.must_include = {"Sub", "Dropout"};
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Graph g = gen_random_graph(seed, params);
    auto result = convert(g, profile("mobile-strict"), builtin_rules());
    validate(result.converted);  // would throw on duplicate producers
    if (result.split) validate(result.split->postprocess);
  }
}
