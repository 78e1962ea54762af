// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "retarget/interpreter.hpp"

namespace retarget {

using nlohmann::json;

TensorMap parse_tensors(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("tensors text is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ParseError("tensors file must be a JSON object");

  TensorMap out;
  for (auto it = root.begin(); it != root.end(); ++it) {
    const std::string& name = it.key();
    const json& jt = it.value();
    if (!jt.is_object() || !jt.contains("dtype") || !jt.contains("shape") ||
        !jt.contains("data"))
      throw ParseError("tensor '" + name + "' needs dtype, shape and data fields");
    auto dt = dtype_from_name(jt.at("dtype").get<std::string>());
    if (!dt) throw ParseError("tensor '" + name + "': unknown dtype");
    Shape shape;
    for (const auto& d : jt.at("shape")) shape.push_back(d.get<int64_t>());
    const json& data = jt.at("data");
    if (!data.is_array()) throw ParseError("tensor '" + name + "': data must be an array");
    if (static_cast<int64_t>(data.size()) != numel(shape))
      throw ParseError("tensor '" + name + "': data length does not match shape");

    switch (*dt) {
      case DType::Float32: {
        std::vector<float> v;
        v.reserve(data.size());
        for (const auto& x : data) v.push_back(static_cast<float>(x.get<double>()));
        out[name] = TensorValue::f32(shape, std::move(v));
        break;
      }
      case DType::Int64: {
        std::vector<int64_t> v;
        v.reserve(data.size());
        for (const auto& x : data) v.push_back(x.get<int64_t>());
        out[name] = TensorValue::i64(shape, std::move(v));
        break;
      }
      case DType::Bool: {
        std::vector<uint8_t> v;
        v.reserve(data.size());
        for (const auto& x : data)
          v.push_back(x.is_boolean() ? (x.get<bool>() ? 1 : 0)
                                     : static_cast<uint8_t>(x.get<int64_t>()));
        out[name] = TensorValue::boolean(shape, std::move(v));
        break;
      }
    }
  }
  return out;
}

std::string serialize_tensors(const TensorMap& tensors) {
  json root = json::object();
  for (const auto& [name, value] : tensors) {
    json jt;
    jt["dtype"] = std::string(dtype_name(value.dtype));
    jt["shape"] = value.shape;
    json data = json::array();
    std::visit(
        [&](const auto& vec) {
          for (const auto& v : vec) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, float>)
              data.push_back(static_cast<double>(v));
            else
              data.push_back(static_cast<int64_t>(v));
          }
        },
        value.data);
    jt["data"] = std::move(data);
    root[name] = std::move(jt);
  }
  return root.dump(2) + "\n";
}

TensorMap load_tensors_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open tensors file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_tensors(buf.str());
}

void save_tensors_file(const TensorMap& tensors, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write tensors file '" + path + "'");
  out << serialize_tensors(tensors);
}

}  // namespace retarget
