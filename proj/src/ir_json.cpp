// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0
//
// The .nng.json interchange format. Parsing is strict: unknown fields,
// unknown format versions and mistyped values are rejected up front so that
// errors surface at the file boundary, not deep inside a pass.

#include <fstream>
#include <initializer_list>
#include <sstream>

#include <nlohmann/json.hpp>

#include "retarget/ir.hpp"

namespace retarget {

using nlohmann::json;

namespace {

[[noreturn]] void fail_parse(const std::string& what) { throw ParseError(what); }

const json& require_field(const json& obj, const char* key, const std::string& ctx) {
  auto it = obj.find(key);
  if (it == obj.end()) fail_parse(ctx + ": missing field '" + key + "'");
  return *it;
}

void reject_unknown_fields(const json& obj, std::initializer_list<const char*> allowed,
                           const std::string& ctx) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) known = true;
    if (!known) fail_parse(ctx + ": unknown field '" + it.key() + "'");
  }
}

std::string parse_string(const json& j, const std::string& ctx) {
  if (!j.is_string()) fail_parse(ctx + ": expected a string");
  return j.get<std::string>();
}

DType parse_dtype(const json& j, const std::string& ctx) {
  auto dt = dtype_from_name(parse_string(j, ctx));
  if (!dt) fail_parse(ctx + ": unknown dtype '" + j.get<std::string>() + "'");
  return *dt;
}

Shape parse_shape(const json& j, const std::string& ctx) {
  if (!j.is_array()) fail_parse(ctx + ": 'shape' must be an array");
  Shape shape;
  for (const auto& d : j) {
    if (!d.is_number_integer()) fail_parse(ctx + ": shape dims must be integers");
    shape.push_back(d.get<int64_t>());
  }
  return shape;
}

TensorData parse_data(const json& j, DType dtype, const std::string& ctx) {
  if (!j.is_array()) fail_parse(ctx + ": 'data' must be a flat array");
  switch (dtype) {
    case DType::Float32: {
      std::vector<float> out;
      out.reserve(j.size());
      for (const auto& v : j) {
        if (!v.is_number()) fail_parse(ctx + ": float32 data must be numeric");
        out.push_back(static_cast<float>(v.get<double>()));
      }
      return out;
    }
    case DType::Int64: {
      std::vector<int64_t> out;
      out.reserve(j.size());
      for (const auto& v : j) {
        if (!v.is_number_integer()) fail_parse(ctx + ": int64 data must be integers");
        out.push_back(v.get<int64_t>());
      }
      return out;
    }
    case DType::Bool: {
      std::vector<uint8_t> out;
      out.reserve(j.size());
      for (const auto& v : j) {
        if (v.is_boolean())
          out.push_back(v.get<bool>() ? 1 : 0);
        else if (v.is_number_integer() &&
                 (v.get<int64_t>() == 0 || v.get<int64_t>() == 1))
          out.push_back(static_cast<uint8_t>(v.get<int64_t>()));
        else
          fail_parse(ctx + ": bool data must be true/false or 0/1");
      }
      return out;
    }
  }
  throw InternalError("unhandled dtype");
}

AttrValue parse_attr(const json& j, const std::string& ctx) {
  if (j.is_number_integer()) return j.get<int64_t>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  if (j.is_array()) {
    std::vector<int64_t> list;
    for (const auto& v : j) {
      if (!v.is_number_integer())
        fail_parse(ctx + ": attribute lists must contain integers only");
      list.push_back(v.get<int64_t>());
    }
    return list;
  }
  fail_parse(ctx + ": attribute must be a number, string or integer list");
}

json attr_to_json(const AttrValue& v) {
  return std::visit([](const auto& x) { return json(x); }, v);
}

json data_to_json(const TensorData& data) {
  json arr = json::array();
  std::visit(
      [&](const auto& vec) {
        for (const auto& v : vec) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, float>)
            arr.push_back(static_cast<double>(v));
          else
            arr.push_back(static_cast<int64_t>(v));
        }
      },
      data);
  return arr;
}

}  // namespace

Graph parse_model(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    fail_parse(std::string("model text is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) fail_parse("model text must be a single JSON object");

  reject_unknown_fields(
      root, {"format_version", "name", "inputs", "outputs", "initializers", "nodes"},
      "model");
  const json& version = require_field(root, "format_version", "model");
  if (!version.is_number_integer() || version.get<int64_t>() != 1)
    fail_parse("unsupported format_version (expected 1)");

  Graph g;
  g.name = parse_string(require_field(root, "name", "model"), "model 'name'");

  const json& inputs = require_field(root, "inputs", "model");
  if (!inputs.is_array()) fail_parse("model 'inputs' must be an array");
  for (const auto& in : inputs) {
    if (!in.is_object()) fail_parse("each input must be an object");
    reject_unknown_fields(in, {"name", "dtype", "shape"}, "input");
    TensorSpec spec;
    spec.name = parse_string(require_field(in, "name", "input"), "input 'name'");
    std::string ctx = "input '" + spec.name + "'";
    spec.dtype = parse_dtype(require_field(in, "dtype", ctx), ctx);
    spec.shape = parse_shape(require_field(in, "shape", ctx), ctx);
    g.inputs.push_back(std::move(spec));
  }

  const json& outputs = require_field(root, "outputs", "model");
  if (!outputs.is_array()) fail_parse("model 'outputs' must be an array");
  for (const auto& out : outputs)
    g.outputs.push_back(parse_string(out, "output name"));

  const json& inits = require_field(root, "initializers", "model");
  if (!inits.is_array()) fail_parse("model 'initializers' must be an array");
  for (const auto& init : inits) {
    if (!init.is_object()) fail_parse("each initializer must be an object");
    reject_unknown_fields(init, {"name", "dtype", "shape", "data"}, "initializer");
    Initializer i;
    i.spec.name =
        parse_string(require_field(init, "name", "initializer"), "initializer 'name'");
    std::string ctx = "initializer '" + i.spec.name + "'";
    i.spec.dtype = parse_dtype(require_field(init, "dtype", ctx), ctx);
    i.spec.shape = parse_shape(require_field(init, "shape", ctx), ctx);
    i.data = parse_data(require_field(init, "data", ctx), i.spec.dtype, ctx);
    g.initializers.push_back(std::move(i));
  }

  const json& nodes = require_field(root, "nodes", "model");
  if (!nodes.is_array()) fail_parse("model 'nodes' must be an array");
  for (const auto& jn : nodes) {
    if (!jn.is_object()) fail_parse("each node must be an object");
    reject_unknown_fields(jn, {"id", "op", "inputs", "outputs", "attrs"}, "node");
    Node n;
    n.id = parse_string(require_field(jn, "id", "node"), "node 'id'");
    std::string ctx = "node '" + n.id + "'";
    n.op_type = parse_string(require_field(jn, "op", ctx), ctx + " 'op'");
    const json& nin = require_field(jn, "inputs", ctx);
    if (!nin.is_array()) fail_parse(ctx + ": 'inputs' must be an array");
    for (const auto& v : nin) n.inputs.push_back(parse_string(v, ctx + " input"));
    const json& nout = require_field(jn, "outputs", ctx);
    if (!nout.is_array()) fail_parse(ctx + ": 'outputs' must be an array");
    for (const auto& v : nout) n.outputs.push_back(parse_string(v, ctx + " output"));
    if (jn.contains("attrs")) {
      const json& attrs = jn.at("attrs");
      if (!attrs.is_object()) fail_parse(ctx + ": 'attrs' must be an object");
      for (auto it = attrs.begin(); it != attrs.end(); ++it)
        n.attrs.emplace(it.key(), parse_attr(it.value(), ctx + " attr '" + it.key() + "'"));
    }
    g.nodes.push_back(std::move(n));
  }

  validate(g);
  return g;
}

std::string serialize_model(const Graph& g) {
  json root;
  root["format_version"] = 1;
  root["name"] = g.name;

  json inputs = json::array();
  for (const auto& in : g.inputs) {
    json j;
    j["name"] = in.name;
    j["dtype"] = std::string(dtype_name(in.dtype));
    j["shape"] = in.shape;
    inputs.push_back(std::move(j));
  }
  root["inputs"] = std::move(inputs);

  root["outputs"] = g.outputs;

  json inits = json::array();
  for (const auto& init : g.initializers) {
    json j;
    j["name"] = init.spec.name;
    j["dtype"] = std::string(dtype_name(init.spec.dtype));
    j["shape"] = init.spec.shape;
    j["data"] = data_to_json(init.data);
    inits.push_back(std::move(j));
  }
  root["initializers"] = std::move(inits);

  json nodes = json::array();
  for (const auto& n : g.nodes) {
    json j;
    j["id"] = n.id;
    j["op"] = n.op_type;
    j["inputs"] = n.inputs;
    j["outputs"] = n.outputs;
    json attrs = json::object();
    for (const auto& [name, value] : n.attrs) attrs[name] = attr_to_json(value);
    j["attrs"] = std::move(attrs);
    nodes.push_back(std::move(j));
  }
  root["nodes"] = std::move(nodes);

  return root.dump(2) + "\n";
}

Graph load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

void save_model_file(const Graph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model file '" + path + "'");
  out << serialize_model(g);
}

}  // namespace retarget
