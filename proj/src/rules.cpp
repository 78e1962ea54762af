// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0

#include "retarget/rules.hpp"

#include <algorithm>
#include <cmath>

#include "retarget/interpreter.hpp"

namespace retarget {

std::string_view scenario_name(Scenario s) {
  switch (s) {
    case Scenario::S1_Substitute: return "S1_substitute";
    case Scenario::S2_RetrainRewrite: return "S2_retrain_rewrite";
    case Scenario::S3_TailSplit: return "S3_tail_split";
    case Scenario::S4_CustomOp: return "S4_custom_op";
  }
  throw InternalError("unknown scenario");
}

std::optional<Scenario> scenario_from_name(std::string_view name) {
  if (name == "S1" || name == "S1_substitute") return Scenario::S1_Substitute;
  if (name == "S2" || name == "S2_retrain_rewrite") return Scenario::S2_RetrainRewrite;
  if (name == "S3" || name == "S3_tail_split") return Scenario::S3_TailSplit;
  if (name == "S4" || name == "S4_custom_op") return Scenario::S4_CustomOp;
  return std::nullopt;
}

std::string NameAllocator::fresh(const std::string& base) {
  for (int64_t k = 0;; ++k) {
    std::string candidate = base + "__rw" + std::to_string(k);
    if (taken_.insert(candidate).second) return candidate;
    if (k > 1'000'000)
      throw Error("fresh-name space exhausted for base '" + base + "'");
  }
}

void RuleRegistry::add(RewriteRule rule) { rules_.push_back(std::move(rule)); }

const RewriteRule* RuleRegistry::find(std::string_view rule_id) const {
  for (const auto& r : rules_)
    if (r.rule_id == rule_id) return &r;
  return nullptr;
}

namespace {

bool value_is_graph_output(const Graph& g, const std::string& value) {
  return std::find(g.outputs.begin(), g.outputs.end(), value) != g.outputs.end();
}

// Dropping a node renames its output to its input everywhere. That is only
// unsafe when both names are declared graph outputs (the rename would
// declare the same output twice).
bool drop_is_safe(const RuleInput& in) {
  return !(value_is_graph_output(in.graph, in.node.outputs[0]) &&
           value_is_graph_output(in.graph, in.node.inputs[0]));
}

RuleApplication build_drop(const RuleInput& in) {
  RuleApplication app;
  app.value_remap[in.node.outputs[0]] = in.node.inputs[0];
  return app;
}

std::vector<float> negated(const Initializer& init) {
  std::vector<float> data = std::get<std::vector<float>>(init.data);
  for (float& v : data) v = -v;
  return data;
}

// --- Sub(x, c) -> Add(x, -c), c constant --------------------------------

RewriteRule make_sub_const_to_add() {
  RewriteRule r;
  r.rule_id = "sub_const_to_add";
  r.scenario = Scenario::S1_Substitute;
  r.summary =
      "Replace Subtract by Add with the constant operand negated; the field-"
      "reported substitution for targets lacking Sub.";
  r.matches = [](const RuleInput& in) {
    if (in.node.op_type != "Sub") return false;
    if (in.shapes.at(in.node.inputs[1]).dtype != DType::Float32) return false;
    return is_constant(in.graph, in.node.inputs[1]);
  };
  r.build = [](const RuleInput& in, NameAllocator& values, NameAllocator& ids) {
    (void)ids;
    auto folded = constant_value(in.graph, in.node.inputs[1]);
    if (!folded) throw InternalError("sub_const_to_add matched a non-constant operand");
    RuleApplication app;
    Initializer neg;
    neg.spec = folded->spec;
    neg.spec.name = values.fresh(in.node.inputs[1]);
    neg.data = negated(*folded);
    app.initializers.push_back(neg);
    app.nodes.push_back(Node{in.node.id, "Add",
                             {in.node.inputs[0], neg.spec.name},
                             in.node.outputs,
                             {}});
    return app;
  };
  return r;
}

// --- Sub(x, y) -> Add(x, Neg(y)) -----------------------------------------

RewriteRule make_sub_to_add_neg() {
  RewriteRule r;
  r.rule_id = "sub_to_add_neg";
  r.scenario = Scenario::S1_Substitute;
  r.summary =
      "Replace Subtract by Add of the negated operand (extension of the "
      "constant-negation substitution to non-constant operands).";
  r.matches = [](const RuleInput& in) { return in.node.op_type == "Sub"; };
  r.build = [](const RuleInput& in, NameAllocator& values, NameAllocator& ids) {
    RuleApplication app;
    const std::string neg_out = values.fresh(in.node.inputs[1]);
    app.nodes.push_back(
        Node{ids.fresh(in.node.id), "Neg", {in.node.inputs[1]}, {neg_out}, {}});
    app.nodes.push_back(
        Node{in.node.id, "Add", {in.node.inputs[0], neg_out}, in.node.outputs, {}});
    return app;
  };
  return r;
}

// --- drop rules -----------------------------------------------------------

RewriteRule make_dropout_drop() {
  RewriteRule r;
  r.rule_id = "dropout_drop";
  r.scenario = Scenario::S1_Substitute;
  r.summary = "Remove Dropout, which is the identity at inference time.";
  r.matches = [](const RuleInput& in) {
    return in.node.op_type == "Dropout" && drop_is_safe(in);
  };
  r.build = [](const RuleInput& in, NameAllocator&, NameAllocator&) {
    return build_drop(in);
  };
  return r;
}

RewriteRule make_cast_noop_drop() {
  RewriteRule r;
  r.rule_id = "cast_noop_drop";
  r.scenario = Scenario::S1_Substitute;
  r.summary = "Remove Cast nodes whose target dtype equals the operand dtype.";
  r.matches = [](const RuleInput& in) {
    if (in.node.op_type != "Cast" || !drop_is_safe(in)) return false;
    auto to = dtype_from_name(in.node.attr_string("to"));
    return to && *to == in.shapes.at(in.node.inputs[0]).dtype;
  };
  r.build = [](const RuleInput& in, NameAllocator&, NameAllocator&) {
    return build_drop(in);
  };
  return r;
}

// --- ConvTranspose2D rewrites ---------------------------------------------
//
// Both rewrites emit the same node pattern, Conv2D -> Reshape -> Transpose
// -> Reshape. The non-overlapping case (stride == kernel, pad 0) is an exact
// equivalence: each input pixel alone determines one disjoint k x k output
// block, so a 1x1 convolution with Cout*k*k channels followed by a
// channel-major depth-to-space rearrangement reproduces the deconvolution
// bit for bit (up to float summation order).

struct DeconvGeometry {
  int64_t n, cin, h, w;      // input
  int64_t cout, kh, kw;      // weights [Cin, Cout, kh, kw]
  int64_t sh, sw, ph, pw;    // attrs
  int64_t hout, wout;
};

DeconvGeometry deconv_geometry(const RuleInput& in) {
  const Shape& x = in.shapes.at(in.node.inputs[0]).shape;
  const Shape& w = in.shapes.at(in.node.inputs[1]).shape;
  DeconvGeometry geo;
  geo.n = x[0];
  geo.cin = x[1];
  geo.h = x[2];
  geo.w = x[3];
  geo.cout = w[1];
  geo.kh = w[2];
  geo.kw = w[3];
  std::tie(geo.sh, geo.sw) = in.node.attr_int_pair_or("stride", 1);
  std::tie(geo.ph, geo.pw) = in.node.attr_int_pair_or("pad", 0);
  geo.hout = (geo.h - 1) * geo.sh - 2 * geo.ph + geo.kh;
  geo.wout = (geo.w - 1) * geo.sw - 2 * geo.pw + geo.kw;
  return geo;
}

bool is_nonoverlapping(const DeconvGeometry& g) {
  return g.sh == g.sw && g.kh == g.kw && g.sh == g.kh && g.ph == 0 && g.pw == 0;
}

// Appends Reshape -> Transpose -> Reshape performing a channel-major
// depth-to-space by factor `block`: [N, C*block^2, H, W] -> [N, C, H*block,
// W*block]. The final node writes the original output name.
void append_depth_to_space_pattern(RuleApplication& app, const RuleInput& in,
                                   NameAllocator& values, NameAllocator& ids,
                                   const std::string& conv_out, int64_t n, int64_t c,
                                   int64_t block, int64_t h, int64_t w) {
  const std::string r1_out = values.fresh(in.node.outputs[0]);
  app.nodes.push_back(Node{ids.fresh(in.node.id),
                           "Reshape",
                           {conv_out},
                           {r1_out},
                           {{"shape", std::vector<int64_t>{n, c, block, block, h, w}}}});
  const std::string tr_out = values.fresh(in.node.outputs[0]);
  app.nodes.push_back(Node{ids.fresh(in.node.id),
                           "Transpose",
                           {r1_out},
                           {tr_out},
                           {{"perm", std::vector<int64_t>{0, 1, 4, 2, 5, 3}}}});
  app.nodes.push_back(
      Node{ids.fresh(in.node.id),
           "Reshape",
           {tr_out},
           {in.node.outputs[0]},
           {{"shape", std::vector<int64_t>{n, c, h * block, w * block}}}});
}

RewriteRule make_convtranspose_exact() {
  RewriteRule r;
  r.rule_id = "convtranspose_to_conv_exact";
  r.scenario = Scenario::S2_RetrainRewrite;
  r.retraining_required = false;
  r.summary =
      "Non-overlapping ConvTranspose2D (stride == kernel, pad 0) as a 1x1 "
      "Conv2D plus Reshape/Transpose/Reshape with exactly transferred "
      "weights; no retraining.";
  r.matches = [](const RuleInput& in) {
    if (in.node.op_type != "ConvTranspose2D") return false;
    const DeconvGeometry geo = deconv_geometry(in);
    return is_nonoverlapping(geo) && is_constant(in.graph, in.node.inputs[1]);
  };
  r.build = [](const RuleInput& in, NameAllocator& values, NameAllocator& ids) {
    const DeconvGeometry geo = deconv_geometry(in);
    auto weights = constant_value(in.graph, in.node.inputs[1]);
    if (!weights) throw InternalError("exact deconv rewrite needs constant weights");
    const auto& wt = std::get<std::vector<float>>(weights->data);
    const int64_t k = geo.kh;

    // K[(co*k + i)*k + j][ci][0][0] = Wt[ci][co][i][j]
    std::vector<float> packed(static_cast<size_t>(geo.cout * k * k * geo.cin));
    for (int64_t ci = 0; ci < geo.cin; ++ci)
      for (int64_t co = 0; co < geo.cout; ++co)
        for (int64_t i = 0; i < k; ++i)
          for (int64_t j = 0; j < k; ++j)
            packed[(((co * k + i) * k + j) * geo.cin) + ci] =
                wt[((ci * geo.cout + co) * k + i) * k + j];

    RuleApplication app;
    Initializer kernel;
    kernel.spec.name = values.fresh(in.node.inputs[1]);
    kernel.spec.dtype = DType::Float32;
    kernel.spec.shape = {geo.cout * k * k, geo.cin, 1, 1};
    kernel.data = std::move(packed);
    app.initializers.push_back(kernel);

    const std::string conv_out = values.fresh(in.node.outputs[0]);
    app.nodes.push_back(Node{ids.fresh(in.node.id),
                             "Conv2D",
                             {in.node.inputs[0], kernel.spec.name},
                             {conv_out},
                             {{"stride", int64_t{1}}, {"pad", int64_t{0}}}});
    append_depth_to_space_pattern(app, in, values, ids, conv_out, geo.n, geo.cout, k,
                                  geo.h, geo.w);
    app.retraining_required = false;
    return app;
  };
  return r;
}

RewriteRule make_convtranspose_structural() {
  RewriteRule r;
  r.rule_id = "convtranspose_to_conv_structural";
  r.scenario = Scenario::S2_RetrainRewrite;
  r.retraining_required = true;
  r.summary =
      "Any ConvTranspose2D as Conv2D plus Reshape/Transpose/Reshape with the "
      "same output shape; weights start at zero and must be retrained.";
  r.matches = [](const RuleInput& in) { return in.node.op_type == "ConvTranspose2D"; };
  r.build = [](const RuleInput& in, NameAllocator& values, NameAllocator& ids) {
    const DeconvGeometry geo = deconv_geometry(in);
    RuleApplication app;
    app.retraining_required = true;

    const bool subpixel = geo.kh == geo.kw && geo.sh == geo.sw &&
                          geo.kh - 2 * geo.ph == geo.sh && geo.kw - 2 * geo.pw == geo.sw;
    if (subpixel) {
      // Output is exactly (H*s, W*s): resolution-preserving conv with
      // Cout*s^2 channels, then depth-to-space by s.
      const int64_t s = geo.sh;
      int64_t kc = std::max<int64_t>(1, (geo.kh + s - 1) / s);
      if (kc % 2 == 0) ++kc;  // odd kernel so symmetric padding preserves H,W
      Initializer kernel;
      kernel.spec.name = values.fresh(in.node.inputs[1]);
      kernel.spec.dtype = DType::Float32;
      kernel.spec.shape = {geo.cout * s * s, geo.cin, kc, kc};
      kernel.data =
          std::vector<float>(static_cast<size_t>(numel(kernel.spec.shape)), 0.0f);
      app.initializers.push_back(kernel);

      const std::string conv_out = values.fresh(in.node.outputs[0]);
      app.nodes.push_back(Node{ids.fresh(in.node.id),
                               "Conv2D",
                               {in.node.inputs[0], kernel.spec.name},
                               {conv_out},
                               {{"stride", int64_t{1}}, {"pad", (kc - 1) / 2}}});
      append_depth_to_space_pattern(app, in, values, ids, conv_out, geo.n, geo.cout, s,
                                    geo.h, geo.w);
      return app;
    }

    // General case: no depth-to-space factorization reaches the deconv
    // output size, so the conv itself computes at the target resolution
    // (stride 1, per-axis kernel/padding solved from out = in + 2p - k + 1)
    // and the reshape/transpose tail is shape-neutral.
    auto solve_axis = [](int64_t in_sz, int64_t out_sz, int64_t k_base) {
      int64_t k = std::max(k_base, in_sz - out_sz + 1);
      if ((out_sz - in_sz + k - 1) % 2 != 0) ++k;
      return std::pair<int64_t, int64_t>{k, (out_sz - in_sz + k - 1) / 2};
    };
    auto [kch, pch] = solve_axis(geo.h, geo.hout, geo.kh);
    auto [kcw, pcw] = solve_axis(geo.w, geo.wout, geo.kw);

    Initializer kernel;
    kernel.spec.name = values.fresh(in.node.inputs[1]);
    kernel.spec.dtype = DType::Float32;
    kernel.spec.shape = {geo.cout, geo.cin, kch, kcw};
    kernel.data =
        std::vector<float>(static_cast<size_t>(numel(kernel.spec.shape)), 0.0f);
    app.initializers.push_back(kernel);

    const std::string conv_out = values.fresh(in.node.outputs[0]);
    app.nodes.push_back(Node{ids.fresh(in.node.id),
                             "Conv2D",
                             {in.node.inputs[0], kernel.spec.name},
                             {conv_out},
                             {{"stride", int64_t{1}},
                              {"pad", std::vector<int64_t>{pch, pcw}}}});
    const std::string r1_out = values.fresh(in.node.outputs[0]);
    app.nodes.push_back(
        Node{ids.fresh(in.node.id),
             "Reshape",
             {conv_out},
             {r1_out},
             {{"shape", std::vector<int64_t>{geo.n, geo.cout, geo.hout * geo.wout}}}});
    const std::string tr_out = values.fresh(in.node.outputs[0]);
    app.nodes.push_back(Node{ids.fresh(in.node.id),
                             "Transpose",
                             {r1_out},
                             {tr_out},
                             {{"perm", std::vector<int64_t>{0, 1, 2}}}});
    app.nodes.push_back(
        Node{ids.fresh(in.node.id),
             "Reshape",
             {tr_out},
             {in.node.outputs[0]},
             {{"shape", std::vector<int64_t>{geo.n, geo.cout, geo.hout, geo.wout}}}});
    return app;
  };
  return r;
}

}  // namespace

const RuleRegistry& builtin_rules() {
  static const RuleRegistry registry = [] {
    RuleRegistry r;
    r.add(make_sub_const_to_add());
    r.add(make_sub_to_add_neg());
    r.add(make_dropout_drop());
    r.add(make_cast_noop_drop());
    r.add(make_convtranspose_exact());
    r.add(make_convtranspose_structural());
    return r;
  }();
  return registry;
}

}  // namespace retarget
