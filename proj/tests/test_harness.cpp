// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <set>

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
}  // namespace

TEST_CASE("diff_graphs: a graph equals itself") {
  Graph g = load_model_file(fixture_path("sub_const.nng.json"));
  auto report = diff_graphs(g, g, 5, 1e-6, 0);
  CHECK(report.pass);
  CHECK(report.worst_abs_diff == 0.0);
  CHECK(report.trials == 5);
}

TEST_CASE("diff_graphs: a constructed +1 bias fails with diff about 1") {
  Graph g = load_model_file(fixture_path("sub_const.nng.json"));
  Graph biased = g;
  biased.initializers.push_back(f32_init("one_more", {1}, {1.0f}));
  biased.nodes.push_back(Node{"bias_up", "Add", {"act", "one_more"}, {"act2"}, {}});
  biased.outputs = {"act2"};
  validate(biased);

  auto report = diff_graphs(g, biased, 5, 1e-6, 0);
  CHECK_FALSE(report.pass);
  CHECK(report.worst_abs_diff == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("diff_graphs: symmetric in its arguments") {
  Graph a = load_model_file(fixture_path("sub_const.nng.json"));
  auto result = convert(a, profile("mobile-strict"), builtin_rules());
  auto ab = diff_graphs(a, result.converted, 10, 1e-6, 9);
  auto ba = diff_graphs(result.converted, a, 10, 1e-6, 9);
  CHECK(ab.pass == ba.pass);
  CHECK(ab.worst_abs_diff == ba.worst_abs_diff);
}

TEST_CASE("diff_graphs: signature mismatches are errors") {
  Graph a = load_model_file(fixture_path("sub_const.nng.json"));
  Graph b = load_model_file(fixture_path("identity.nng.json"));
  CHECK_THROWS_AS(diff_graphs(a, b, 3, 1e-6, 0), UsageError);
}

TEST_CASE("diff_split: corrupted manifest offsets fail or error out") {
  Graph g = load_model_file(fixture_path("tail_postprocess.nng.json"));
  SplitArtifacts s = split_tail(g, {"n11_softmax", "n12_sub"}, profile("tnn"));

  SplitArtifacts swapped = s;
  std::swap(swapped.fusion_manifest[0].flat_offset,
            swapped.fusion_manifest[1].flat_offset);
  auto report = diff_split(g, swapped, 5, 1e-6, 1);
  CHECK_FALSE(report.pass);

  SplitArtifacts truncated = s;
  truncated.fusion_manifest[1].flat_length -= 1;
  CHECK_THROWS_AS(diff_split(g, truncated, 5, 1e-6, 1), UsageError);
}

TEST_CASE("gen_random_graph: seeded determinism") {
  GenParams params;
  params.node_count = 5;
  Graph a = gen_random_graph(0, params);
  Graph b = gen_random_graph(0, params);
  CHECK(a == b);
  Graph c = gen_random_graph(1, params);
  CHECK(a != c);
}

TEST_CASE("gen_random_graph: 200 samples validate and cover every op") {
  std::set<std::string> seen;
  for (uint64_t seed = 0; seed < 200; ++seed) {
    GenParams params;
    params.node_count = 7;
    Graph g = gen_random_graph(seed, params);
    validate(g);  // throws on any invariant breach
    for (const auto& n : g.nodes) seen.insert(n.op_type);
  }
  for (const auto& op : op_vocabulary()) {
    INFO("op ", op);
    CHECK(seen.count(op));
  }
}

TEST_CASE("gen_random_graph: planted ops appear") {
  GenParams params;
  params.node_count = 6;
  params.must_include = {"Sub"};
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Graph g = gen_random_graph(seed, params);
    bool has_const_sub = false;
    for (const auto& n : g.nodes)
      if (n.op_type == "Sub" && is_constant(g, n.inputs[1])) has_const_sub = true;
    CHECK(has_const_sub);
  }
}

TEST_CASE("gen_random_inputs: deterministic and in range") {
  Graph g = load_model_file(fixture_path("sub_const.nng.json"));
  TensorMap a = gen_random_inputs(g, 3);
  TensorMap b = gen_random_inputs(g, 3);
  CHECK(a == b);
  for (float v : a.at("x").floats()) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
  CHECK(gen_random_inputs(g, 4) != a);
}

TEST_CASE("diff report JSON is stable") {
  Graph g = load_model_file(fixture_path("identity.nng.json"));
  auto report = diff_graphs(g, g, 2, 1e-6, 0);
  const std::string text = diff_report_to_json(report);
  CHECK(text == diff_report_to_json(report));
  CHECK(text.find("\"pass\"") != std::string::npos);
}
