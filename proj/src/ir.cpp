// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0

#include "retarget/ir.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <sstream>

namespace retarget {

namespace {

std::string quoted(std::string_view s) { return "'" + std::string(s) + "'"; }

[[noreturn]] void fail_validation(std::string_view node_id, std::string_view what) {
  throw ValidationError("node " + quoted(node_id) + ": " + std::string(what));
}

[[noreturn]] void fail_shape(std::string_view node_id, std::string_view what) {
  throw ShapeError("node " + quoted(node_id) + ": " + std::string(what));
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// dtype / data helpers
// ---------------------------------------------------------------------------

std::string_view dtype_name(DType dt) {
  switch (dt) {
    case DType::Float32: return "float32";
    case DType::Int64: return "int64";
    case DType::Bool: return "bool";
  }
  throw InternalError("unknown dtype");
}

std::optional<DType> dtype_from_name(std::string_view name) {
  if (name == "float32") return DType::Float32;
  if (name == "int64") return DType::Int64;
  if (name == "bool") return DType::Bool;
  return std::nullopt;
}

int64_t dtype_size_bytes(DType dt) {
  switch (dt) {
    case DType::Float32: return 4;
    case DType::Int64: return 8;
    case DType::Bool: return 1;
  }
  throw InternalError("unknown dtype");
}

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

DType data_dtype(const TensorData& data) {
  if (std::holds_alternative<std::vector<float>>(data)) return DType::Float32;
  if (std::holds_alternative<std::vector<int64_t>>(data)) return DType::Int64;
  return DType::Bool;
}

int64_t data_size(const TensorData& data) {
  return std::visit([](const auto& v) { return static_cast<int64_t>(v.size()); }, data);
}

// ---------------------------------------------------------------------------
// Node attribute access
// ---------------------------------------------------------------------------

bool Node::has_attr(std::string_view name) const {
  return attrs.find(std::string(name)) != attrs.end();
}

namespace {
const AttrValue& require_attr(const Node& n, std::string_view name) {
  auto it = n.attrs.find(std::string(name));
  if (it == n.attrs.end())
    fail_validation(n.id, "missing required attribute " + quoted(name));
  return it->second;
}
}  // namespace

int64_t Node::attr_int(std::string_view name) const {
  const AttrValue& v = require_attr(*this, name);
  if (const auto* i = std::get_if<int64_t>(&v)) return *i;
  fail_validation(id, "attribute " + quoted(name) + " must be an integer");
}

int64_t Node::attr_int_or(std::string_view name, int64_t fallback) const {
  return has_attr(name) ? attr_int(name) : fallback;
}

double Node::attr_float_or(std::string_view name, double fallback) const {
  auto it = attrs.find(std::string(name));
  if (it == attrs.end()) return fallback;
  if (const auto* d = std::get_if<double>(&it->second)) return *d;
  if (const auto* i = std::get_if<int64_t>(&it->second)) return static_cast<double>(*i);
  fail_validation(id, "attribute " + quoted(name) + " must be numeric");
}

const std::string& Node::attr_string(std::string_view name) const {
  const AttrValue& v = require_attr(*this, name);
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  fail_validation(id, "attribute " + quoted(name) + " must be a string");
}

const std::vector<int64_t>& Node::attr_ints(std::string_view name) const {
  const AttrValue& v = require_attr(*this, name);
  if (const auto* l = std::get_if<std::vector<int64_t>>(&v)) return *l;
  fail_validation(id, "attribute " + quoted(name) + " must be an integer list");
}

std::pair<int64_t, int64_t> Node::attr_int_pair_or(std::string_view name,
                                                   int64_t fallback) const {
  auto it = attrs.find(std::string(name));
  if (it == attrs.end()) return {fallback, fallback};
  if (const auto* i = std::get_if<int64_t>(&it->second)) return {*i, *i};
  if (const auto* l = std::get_if<std::vector<int64_t>>(&it->second)) {
    if (l->size() != 2)
      fail_validation(id, "attribute " + quoted(name) + " list must have 2 entries");
    return {(*l)[0], (*l)[1]};
  }
  fail_validation(id, "attribute " + quoted(name) + " must be an int or [h,w] pair");
}

// ---------------------------------------------------------------------------
// Op vocabulary and per-op schemas
// ---------------------------------------------------------------------------

namespace {

enum class AttrKind { Int, Float, String, Ints, IntOrPair };

struct AttrSchema {
  AttrKind kind;
  bool required;
};

struct OpSchema {
  int min_inputs;
  int max_inputs;  // -1: unbounded
  int num_outputs;
  std::map<std::string, AttrSchema> attrs;
};

const std::map<std::string, OpSchema>& op_schemas() {
  static const std::map<std::string, OpSchema> schemas = {
      {"Add", {2, 2, 1, {}}},
      {"Sub", {2, 2, 1, {}}},
      {"Mul", {2, 2, 1, {}}},
      {"Neg", {1, 1, 1, {}}},
      {"Relu", {1, 1, 1, {}}},
      {"Softmax", {1, 1, 1, {{"axis", {AttrKind::Int, true}}}}},
      {"Reshape", {1, 1, 1, {{"shape", {AttrKind::Ints, true}}}}},
      {"Transpose", {1, 1, 1, {{"perm", {AttrKind::Ints, true}}}}},
      {"Concat", {1, -1, 1, {{"axis", {AttrKind::Int, true}}}}},
      {"Slice",
       {1, 1, 1,
        {{"starts", {AttrKind::Ints, true}},
         {"ends", {AttrKind::Ints, true}},
         {"axes", {AttrKind::Ints, true}}}}},
      {"Flatten", {1, 1, 1, {}}},
      {"Conv2D",
       {2, 2, 1,
        {{"stride", {AttrKind::IntOrPair, false}}, {"pad", {AttrKind::IntOrPair, false}}}}},
      {"ConvTranspose2D",
       {2, 2, 1,
        {{"stride", {AttrKind::IntOrPair, false}}, {"pad", {AttrKind::IntOrPair, false}}}}},
      {"DepthToSpace", {1, 1, 1, {{"blocksize", {AttrKind::Int, true}}}}},
      {"Dropout", {1, 1, 1, {{"ratio", {AttrKind::Float, false}}}}},
      {"Cast", {1, 1, 1, {{"to", {AttrKind::String, true}}}}},
  };
  return schemas;
}

bool attr_matches_kind(const AttrValue& v, AttrKind kind) {
  switch (kind) {
    case AttrKind::Int:
      return std::holds_alternative<int64_t>(v);
    case AttrKind::Float:
      return std::holds_alternative<double>(v) || std::holds_alternative<int64_t>(v);
    case AttrKind::String:
      return std::holds_alternative<std::string>(v);
    case AttrKind::Ints:
      return std::holds_alternative<std::vector<int64_t>>(v);
    case AttrKind::IntOrPair:
      if (std::holds_alternative<int64_t>(v)) return true;
      if (const auto* l = std::get_if<std::vector<int64_t>>(&v)) return l->size() == 2;
      return false;
  }
  return false;
}

}  // namespace

const std::vector<std::string>& op_vocabulary() {
  static const std::vector<std::string> vocab = [] {
    std::vector<std::string> v;
    for (const auto& [name, schema] : op_schemas()) v.push_back(name);
    return v;
  }();
  return vocab;
}

bool is_vocabulary_op(std::string_view op_type) {
  return op_schemas().count(std::string(op_type)) > 0;
}

bool is_custom_op(std::string_view op_type) {
  constexpr std::string_view prefix = "Custom:";
  return op_type.size() > prefix.size() && op_type.substr(0, prefix.size()) == prefix;
}

namespace {
size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= b.size(); ++j) {
      size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}
}  // namespace

std::string nearest_vocabulary_op(std::string_view op_type) {
  std::string best;
  size_t best_dist = SIZE_MAX;
  for (const auto& candidate : op_vocabulary()) {
    size_t d = edit_distance(op_type, candidate);
    if (d < best_dist || (d == best_dist && candidate < best)) {
      best_dist = d;
      best = candidate;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

GraphIndex index_graph(const Graph& g) {
  GraphIndex idx;
  for (size_t i = 0; i < g.inputs.size(); ++i)
    idx.producers.emplace(g.inputs[i].name, Producer{Producer::GraphInput, i});
  for (size_t i = 0; i < g.initializers.size(); ++i)
    idx.producers.emplace(g.initializers[i].spec.name,
                          Producer{Producer::InitializerValue, i});
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    for (const auto& out : g.nodes[i].outputs)
      idx.producers.emplace(out, Producer{Producer::NodeOutput, i});
    for (const auto& in : g.nodes[i].inputs) idx.consumers[in].push_back(i);
  }
  return idx;
}

namespace {

void validate_spec(const TensorSpec& spec, std::string_view context) {
  if (spec.name.empty())
    throw ValidationError(std::string(context) + ": empty value name");
  for (int64_t d : spec.shape)
    if (d < 1)
      throw ValidationError(std::string(context) + " " + quoted(spec.name) +
                            ": dimension " + std::to_string(d) +
                            " (all dims of a concrete tensor must be >= 1)");
}

void validate_node_attrs(const Node& n) {
  if (is_custom_op(n.op_type)) return;  // custom ops carry free-form attrs
  const OpSchema& schema = op_schemas().at(n.op_type);
  for (const auto& [name, value] : n.attrs) {
    auto it = schema.attrs.find(name);
    if (it == schema.attrs.end())
      fail_validation(n.id, "unknown attribute " + quoted(name) + " for op " +
                                quoted(n.op_type));
    if (!attr_matches_kind(value, it->second.kind))
      fail_validation(n.id, "attribute " + quoted(name) + " has the wrong type");
  }
  for (const auto& [name, attr] : schema.attrs)
    if (attr.required && !n.has_attr(name))
      fail_validation(n.id, "missing required attribute " + quoted(name));

  // Value-level checks that do not need shapes.
  if (n.op_type == "Cast") {
    const std::string& to = n.attr_string("to");
    if (to != "float32" && to != "int64")
      fail_validation(n.id, "Cast 'to' must be float32 or int64, got " + quoted(to));
  }
  if (n.op_type == "Dropout") {
    double ratio = n.attr_float_or("ratio", 0.5);
    if (ratio < 0.0 || ratio > 1.0)
      fail_validation(n.id, "Dropout ratio must lie in [0, 1]");
  }
  if (n.op_type == "DepthToSpace") {
    if (n.attr_int("blocksize") < 1) fail_validation(n.id, "blocksize must be >= 1");
  }
  if (n.op_type == "Conv2D" || n.op_type == "ConvTranspose2D") {
    auto [sh, sw] = n.attr_int_pair_or("stride", 1);
    auto [ph, pw] = n.attr_int_pair_or("pad", 0);
    if (sh < 1 || sw < 1) fail_validation(n.id, "stride must be >= 1");
    if (ph < 0 || pw < 0) fail_validation(n.id, "pad must be >= 0");
  }
  if (n.op_type == "Slice") {
    const auto& starts = n.attr_ints("starts");
    const auto& ends = n.attr_ints("ends");
    const auto& axes = n.attr_ints("axes");
    if (starts.size() != ends.size() || starts.size() != axes.size())
      fail_validation(n.id, "Slice starts/ends/axes must have equal lengths");
    std::set<int64_t> seen(axes.begin(), axes.end());
    if (seen.size() != axes.size()) fail_validation(n.id, "Slice axes must be distinct");
  }
}

}  // namespace

void validate(const Graph& g) {
  // Single assignment over the whole value namespace.
  std::set<std::string> names;
  auto claim = [&](const std::string& name, std::string_view who) {
    if (name.empty()) throw ValidationError(std::string(who) + ": empty value name");
    if (!names.insert(name).second)
      throw ValidationError("duplicate producer for value " + quoted(name) + " (" +
                            std::string(who) + ")");
  };

  for (const auto& in : g.inputs) {
    validate_spec(in, "graph input");
    claim(in.name, "graph input");
  }
  for (const auto& init : g.initializers) {
    validate_spec(init.spec, "initializer");
    claim(init.spec.name, "initializer");
    if (data_dtype(init.data) != init.spec.dtype)
      throw ValidationError("initializer " + quoted(init.spec.name) +
                            ": payload dtype does not match declared dtype");
    if (data_size(init.data) != numel(init.spec.shape))
      throw ValidationError("initializer " + quoted(init.spec.name) + ": payload has " +
                            std::to_string(data_size(init.data)) + " elements, shape " +
                            shape_str(init.spec.shape) + " requires " +
                            std::to_string(numel(init.spec.shape)));
  }

  std::set<std::string> node_ids;
  for (const auto& n : g.nodes) {
    if (n.id.empty()) throw ValidationError("node with empty id");
    if (!node_ids.insert(n.id).second)
      throw ValidationError("duplicate node id " + quoted(n.id));
    if (!is_vocabulary_op(n.op_type) && !is_custom_op(n.op_type))
      fail_validation(n.id, "unknown op " + quoted(n.op_type) + " (did you mean " +
                              quoted(nearest_vocabulary_op(n.op_type)) + "?)");
    if (n.outputs.empty()) fail_validation(n.id, "node produces no outputs");
    for (const auto& out : n.outputs) claim(out, "node " + std::string(n.id));
    if (!is_custom_op(n.op_type)) {
      const OpSchema& schema = op_schemas().at(n.op_type);
      int arity = static_cast<int>(n.inputs.size());
      if (arity < schema.min_inputs ||
          (schema.max_inputs >= 0 && arity > schema.max_inputs))
        fail_validation(n.id, "op " + quoted(n.op_type) + " does not take " +
                                  std::to_string(arity) + " inputs");
      if (static_cast<int>(n.outputs.size()) != schema.num_outputs)
        fail_validation(n.id, "op " + quoted(n.op_type) + " produces exactly " +
                                  std::to_string(schema.num_outputs) + " output(s)");
    }
    validate_node_attrs(n);
  }

  // Every consumed value has a producer.
  for (const auto& n : g.nodes)
    for (const auto& in : n.inputs)
      if (!names.count(in))
        fail_validation(n.id, "input " + quoted(in) + " is produced nowhere");

  std::set<std::string> declared_outputs;
  for (const auto& out : g.outputs) {
    if (!names.count(out))
      throw ValidationError("graph output " + quoted(out) + " is produced nowhere");
    if (!declared_outputs.insert(out).second)
      throw ValidationError("graph output " + quoted(out) + " declared twice");
  }

  toposort(g);  // throws on cycles
}

// ---------------------------------------------------------------------------
// Topological order
// ---------------------------------------------------------------------------

std::vector<size_t> toposort(const Graph& g) {
  GraphIndex idx = index_graph(g);

  std::vector<size_t> pending(g.nodes.size(), 0);
  std::map<size_t, std::vector<size_t>> dependents;  // producer node -> consumers
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    for (const auto& in : g.nodes[i].inputs) {
      auto it = idx.producers.find(in);
      if (it == idx.producers.end())
        fail_validation(g.nodes[i].id, "input " + quoted(in) + " is produced nowhere");
      if (it->second.kind == Producer::NodeOutput && it->second.index != i) {
        pending[i]++;
        dependents[it->second.index].push_back(i);
      }
    }
  }

  auto by_id_desc = [&](size_t a, size_t b) { return g.nodes[a].id > g.nodes[b].id; };
  std::priority_queue<size_t, std::vector<size_t>, decltype(by_id_desc)> ready(by_id_desc);
  for (size_t i = 0; i < g.nodes.size(); ++i)
    if (pending[i] == 0) ready.push(i);

  std::vector<size_t> order;
  order.reserve(g.nodes.size());
  while (!ready.empty()) {
    size_t i = ready.top();
    ready.pop();
    order.push_back(i);
    auto it = dependents.find(i);
    if (it == dependents.end()) continue;
    for (size_t consumer : it->second)
      if (--pending[consumer] == 0) ready.push(consumer);
  }

  if (order.size() != g.nodes.size()) {
    for (size_t i = 0; i < g.nodes.size(); ++i)
      if (pending[i] > 0)
        fail_validation(g.nodes[i].id, "cycle in node dependencies");
    throw InternalError("toposort lost nodes without a cycle");
  }
  return order;
}

// ---------------------------------------------------------------------------
// Shape inference
// ---------------------------------------------------------------------------

namespace {

using SpecMap = std::map<std::string, TensorSpec>;

const TensorSpec& spec_of(const SpecMap& specs, const Node& n, const std::string& value) {
  auto it = specs.find(value);
  if (it == specs.end())
    fail_shape(n.id, "no inferred spec for input " + quoted(value));
  return it->second;
}

void require_f32(const Node& n, const TensorSpec& spec) {
  if (spec.dtype != DType::Float32)
    fail_shape(n.id, "operand " + quoted(spec.name) + " must be float32, got " +
                         std::string(dtype_name(spec.dtype)));
}

// Restricted broadcasting: equal shapes, a scalar ([] or [1]) against
// anything, or a [C,1,1] bias against [N,C,H,W].
std::optional<Shape> broadcast_shapes(const Shape& a, const Shape& b) {
  if (a == b) return a;
  auto is_scalar = [](const Shape& s) {
    return s.empty() || (s.size() == 1 && s[0] == 1);
  };
  if (is_scalar(a)) return b;
  if (is_scalar(b)) return a;
  auto channel_bias = [](const Shape& bias, const Shape& full) {
    return full.size() == 4 && bias.size() == 3 && bias[0] == full[1] && bias[1] == 1 &&
           bias[2] == 1;
  };
  if (channel_bias(a, b)) return b;
  if (channel_bias(b, a)) return a;
  return std::nullopt;
}

TensorSpec infer_elementwise_binary(const Node& n, const TensorSpec& a,
                                    const TensorSpec& b) {
  require_f32(n, a);
  require_f32(n, b);
  auto out = broadcast_shapes(a.shape, b.shape);
  if (!out)
    fail_shape(n.id, "operands " + shape_str(a.shape) + " and " + shape_str(b.shape) +
                         " are not broadcast-compatible");
  return {n.outputs[0], DType::Float32, *out};
}

TensorSpec infer_conv2d(const Node& n, const TensorSpec& x, const TensorSpec& w) {
  require_f32(n, x);
  require_f32(n, w);
  if (x.shape.size() != 4) fail_shape(n.id, "Conv2D input must be NCHW rank 4");
  if (w.shape.size() != 4) fail_shape(n.id, "Conv2D weights must be [Cout,Cin,kh,kw]");
  auto [sh, sw] = n.attr_int_pair_or("stride", 1);
  auto [ph, pw] = n.attr_int_pair_or("pad", 0);
  const int64_t cin = x.shape[1];
  if (w.shape[1] != cin)
    fail_shape(n.id, "weight Cin " + std::to_string(w.shape[1]) +
                         " does not match input channels " + std::to_string(cin));
  const int64_t kh = w.shape[2], kw = w.shape[3];
  const int64_t hout = (x.shape[2] + 2 * ph - kh) / sh + 1;
  const int64_t wout = (x.shape[3] + 2 * pw - kw) / sw + 1;
  if (x.shape[2] + 2 * ph < kh || x.shape[3] + 2 * pw < kw || hout < 1 || wout < 1)
    fail_shape(n.id, "kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " does not fit input " + shape_str(x.shape) + " with pad " +
                         std::to_string(ph) + "," + std::to_string(pw));
  return {n.outputs[0], DType::Float32, {x.shape[0], w.shape[0], hout, wout}};
}

TensorSpec infer_convtranspose2d(const Node& n, const TensorSpec& x, const TensorSpec& w) {
  require_f32(n, x);
  require_f32(n, w);
  if (x.shape.size() != 4) fail_shape(n.id, "ConvTranspose2D input must be NCHW rank 4");
  if (w.shape.size() != 4)
    fail_shape(n.id, "ConvTranspose2D weights must be [Cin,Cout,kh,kw]");
  auto [sh, sw] = n.attr_int_pair_or("stride", 1);
  auto [ph, pw] = n.attr_int_pair_or("pad", 0);
  const int64_t cin = x.shape[1];
  if (w.shape[0] != cin)
    fail_shape(n.id, "weight Cin " + std::to_string(w.shape[0]) +
                         " does not match input channels " + std::to_string(cin));
  const int64_t hout = (x.shape[2] - 1) * sh - 2 * ph + w.shape[2];
  const int64_t wout = (x.shape[3] - 1) * sw - 2 * pw + w.shape[3];
  if (hout < 1 || wout < 1)
    fail_shape(n.id, "output spatial size " + std::to_string(hout) + "x" +
                         std::to_string(wout) + " is not positive");
  return {n.outputs[0], DType::Float32, {x.shape[0], w.shape[1], hout, wout}};
}

TensorSpec infer_node_output(const Node& n, const SpecMap& specs) {
  const std::string& op = n.op_type;

  if (is_custom_op(op)) {
    // Custom ops: optional 'shape' (+ 'dtype') attrs pin the single output;
    // otherwise output i mirrors input i.
    if (n.outputs.size() == 1 && n.has_attr("shape")) {
      DType dt = DType::Float32;
      if (n.has_attr("dtype")) {
        auto parsed = dtype_from_name(n.attr_string("dtype"));
        if (!parsed) fail_shape(n.id, "bad custom-op dtype attribute");
        dt = *parsed;
      } else if (!n.inputs.empty()) {
        dt = spec_of(specs, n, n.inputs[0]).dtype;
      }
      return {n.outputs[0], dt, n.attr_ints("shape")};
    }
    throw InternalError("custom op outputs are inferred in infer_shapes()");
  }

  if (op == "Add" || op == "Sub" || op == "Mul")
    return infer_elementwise_binary(n, spec_of(specs, n, n.inputs[0]),
                                    spec_of(specs, n, n.inputs[1]));

  if (op == "Neg" || op == "Relu") {
    const TensorSpec& x = spec_of(specs, n, n.inputs[0]);
    require_f32(n, x);
    return {n.outputs[0], DType::Float32, x.shape};
  }

  if (op == "Softmax") {
    const TensorSpec& x = spec_of(specs, n, n.inputs[0]);
    require_f32(n, x);
    int64_t rank = static_cast<int64_t>(x.shape.size());
    int64_t axis = n.attr_int("axis");
    if (axis < -rank || axis >= rank)
      fail_shape(n.id, "Softmax axis " + std::to_string(axis) + " out of range for rank " +
                           std::to_string(rank));
    return {n.outputs[0], DType::Float32, x.shape};
  }

  if (op == "Reshape") {
    const TensorSpec& x = spec_of(specs, n, n.inputs[0]);
    const auto& target = n.attr_ints("shape");
    for (int64_t d : target)
      if (d < 1) fail_shape(n.id, "Reshape target dims must be >= 1");
    if (numel(target) != numel(x.shape))
      fail_shape(n.id, "cannot reshape " + shape_str(x.shape) + " (" +
                           std::to_string(numel(x.shape)) + " elements) to " +
                           shape_str(target) + " (" + std::to_string(numel(target)) +
                           " elements)");
    return {n.outputs[0], x.dtype, target};
  }

  if (op == "Transpose") {
    const TensorSpec& x = spec_of(specs, n, n.inputs[0]);
    const auto& perm = n.attr_ints("perm");
    int64_t rank = static_cast<int64_t>(x.shape.size());
    if (static_cast<int64_t>(perm.size()) != rank)
      fail_shape(n.id, "perm length " + std::to_string(perm.size()) +
                           " does not match rank " + std::to_string(rank));
    std::vector<bool> seen(x.shape.size(), false);
    Shape out(x.shape.size());
    for (size_t i = 0; i < perm.size(); ++i) {
      int64_t p = perm[i];
      if (p < 0 || p >= rank || seen[p])
        fail_shape(n.id, "perm is not a permutation of 0.." + std::to_string(rank - 1));
      seen[p] = true;
      out[i] = x.shape[p];
    }
    return {n.outputs[0], x.dtype, out};
  }

  if (op == "Concat") {
    const TensorSpec& first = spec_of(specs, n, n.inputs[0]);
    int64_t rank = static_cast<int64_t>(first.shape.size());
    int64_t axis = n.attr_int("axis");
    if (axis < 0 || axis >= rank)
      fail_shape(n.id, "Concat axis " + std::to_string(axis) + " out of range");
    Shape out = first.shape;
    for (size_t i = 1; i < n.inputs.size(); ++i) {
      const TensorSpec& x = spec_of(specs, n, n.inputs[i]);
      if (x.dtype != first.dtype) fail_shape(n.id, "Concat operands must share a dtype");
      if (static_cast<int64_t>(x.shape.size()) != rank)
        fail_shape(n.id, "Concat operands must share a rank");
      for (int64_t d = 0; d < rank; ++d) {
        if (d == axis) continue;
        if (x.shape[d] != first.shape[d])
          fail_shape(n.id, "Concat operand " + quoted(x.name) + " dim " +
                               std::to_string(d) + " is " + std::to_string(x.shape[d]) +
                               ", expected " + std::to_string(first.shape[d]));
      }
      out[axis] += x.shape[axis];
    }
    return {n.outputs[0], first.dtype, out};
  }

  if (op == "Slice") {
    const TensorSpec& x = spec_of(specs, n, n.inputs[0]);
    const auto& starts = n.attr_ints("starts");
    const auto& ends = n.attr_ints("ends");
    const auto& axes = n.attr_ints("axes");
    Shape out = x.shape;
    int64_t rank = static_cast<int64_t>(x.shape.size());
    for (size_t i = 0; i < axes.size(); ++i) {
      int64_t axis = axes[i];
      if (axis < 0 || axis >= rank)
        fail_shape(n.id, "Slice axis " + std::to_string(axis) + " out of range");
      if (starts[i] < 0 || starts[i] >= ends[i] || ends[i] > x.shape[axis])
        fail_shape(n.id, "Slice range [" + std::to_string(starts[i]) + "," +
                             std::to_string(ends[i]) + ") invalid for dim " +
                             std::to_string(x.shape[axis]));
      out[axis] = ends[i] - starts[i];
    }
    return {n.outputs[0], x.dtype, out};
  }

  if (op == "Flatten") {
    const TensorSpec& x = spec_of(specs, n, n.inputs[0]);
    return {n.outputs[0], x.dtype, {numel(x.shape)}};
  }

  if (op == "Conv2D")
    return infer_conv2d(n, spec_of(specs, n, n.inputs[0]), spec_of(specs, n, n.inputs[1]));

  if (op == "ConvTranspose2D")
    return infer_convtranspose2d(n, spec_of(specs, n, n.inputs[0]),
                                 spec_of(specs, n, n.inputs[1]));

  if (op == "DepthToSpace") {
    const TensorSpec& x = spec_of(specs, n, n.inputs[0]);
    int64_t b = n.attr_int("blocksize");
    if (x.shape.size() != 4) fail_shape(n.id, "DepthToSpace input must be NCHW rank 4");
    if (x.shape[1] % (b * b) != 0)
      fail_shape(n.id, "channels " + std::to_string(x.shape[1]) +
                           " not divisible by blocksize^2 = " + std::to_string(b * b));
    return {n.outputs[0], x.dtype,
            {x.shape[0], x.shape[1] / (b * b), x.shape[2] * b, x.shape[3] * b}};
  }

  if (op == "Dropout") {
    const TensorSpec& x = spec_of(specs, n, n.inputs[0]);
    return {n.outputs[0], x.dtype, x.shape};
  }

  if (op == "Cast") {
    const TensorSpec& x = spec_of(specs, n, n.inputs[0]);
    if (x.dtype != DType::Float32 && x.dtype != DType::Int64)
      fail_shape(n.id, "Cast supports float32 and int64 operands only");
    DType to = *dtype_from_name(n.attr_string("to"));
    return {n.outputs[0], to, x.shape};
  }

  fail_shape(n.id, "no shape rule for op " + quoted(op));
}

}  // namespace

std::map<std::string, TensorSpec> infer_shapes(const Graph& g) {
  SpecMap specs;
  for (const auto& in : g.inputs) specs[in.name] = in;
  for (const auto& init : g.initializers) specs[init.spec.name] = init.spec;

  for (size_t i : toposort(g)) {
    const Node& n = g.nodes[i];
    if (is_custom_op(n.op_type) && !(n.outputs.size() == 1 && n.has_attr("shape"))) {
      // Without a declared shape, custom outputs mirror inputs positionally.
      if (n.outputs.size() > n.inputs.size())
        fail_shape(n.id, "custom op with more outputs than inputs needs a 'shape' attr");
      for (size_t o = 0; o < n.outputs.size(); ++o) {
        TensorSpec spec = spec_of(specs, n, n.inputs[o]);
        spec.name = n.outputs[o];
        specs[n.outputs[o]] = spec;
      }
      continue;
    }
    TensorSpec out = infer_node_output(n, specs);
    specs[out.name] = out;
  }
  return specs;
}

bool is_constant(const Graph& g, const std::string& value_name) {
  return constant_value(g, value_name).has_value();
}

std::set<size_t> descendant_closure(const Graph& g, const GraphIndex& idx,
                                    const std::set<size_t>& seeds) {
  std::set<size_t> closure = seeds;
  std::vector<size_t> frontier(seeds.begin(), seeds.end());
  while (!frontier.empty()) {
    size_t i = frontier.back();
    frontier.pop_back();
    for (const auto& out : g.nodes[i].outputs) {
      auto it = idx.consumers.find(out);
      if (it == idx.consumers.end()) continue;
      for (size_t consumer : it->second)
        if (closure.insert(consumer).second) frontier.push_back(consumer);
    }
  }
  return closure;
}

}  // namespace retarget
