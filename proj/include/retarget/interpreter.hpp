// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reference executor for the op vocabulary. Deliberately naive: direct
// convolution loops, float64 accumulation, no fusion and no parallelism.
// This is the ground truth that every rewrite and split is checked against,
// so clarity wins over speed everywhere.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "retarget/ir.hpp"

namespace retarget {

struct TensorValue {
  DType dtype = DType::Float32;
  Shape shape;
  TensorData data = std::vector<float>{};

  static TensorValue f32(Shape shape, std::vector<float> values);
  static TensorValue i64(Shape shape, std::vector<int64_t> values);
  static TensorValue boolean(Shape shape, std::vector<uint8_t> values);
  static TensorValue zeros(DType dtype, const Shape& shape);

  int64_t size() const { return data_size(data); }
  int64_t byte_size() const { return size() * dtype_size_bytes(dtype); }

  std::vector<float>& floats();
  const std::vector<float>& floats() const;
  std::vector<int64_t>& ints();
  const std::vector<int64_t>& ints() const;
  std::vector<uint8_t>& bools();
  const std::vector<uint8_t>& bools() const;

  bool operator==(const TensorValue&) const = default;
};

TensorValue to_value(const Initializer& init);
Initializer to_initializer(const std::string& name, const TensorValue& value);

using TensorMap = std::map<std::string, TensorValue>;

/// Executes the graph in topological order and returns the declared graph
/// outputs. `inputs` must cover exactly g.inputs with matching specs.
/// Identical graph + inputs produce bit-identical outputs across runs.
TensorMap run_graph(const Graph& g, const TensorMap& inputs);

/// Inference-capability metrics for one graph + input set.
struct BenchReport {
  std::vector<double> wall_latency_ms;       // one entry per repetition
  double throughput_per_s = 0.0;             // repetitions / total wall time
  int64_t multiply_accumulate_count = 0;     // analytic, from inferred shapes
  int64_t peak_live_tensor_bytes = 0;        // toposort order, eager freeing
};

/// Runs the graph `repetitions` times and reports latency samples,
/// throughput, the analytic multiply-accumulate count (Conv2D contributes
/// N*Cout*Hout*Wout*Cin*kh*kw, ConvTranspose2D N*Cin*H*W*Cout*kh*kw) and the
/// peak number of live tensor bytes when values are freed eagerly after
/// their last consumer (graph outputs stay live to the end).
BenchReport bench(const Graph& g, const TensorMap& inputs, int repetitions);

// --------------------------------------------------------------------------
// .tensors.json files: a JSON object mapping value names to
// {dtype, shape, data}. Used by the CLI to feed and dump tensors.
// --------------------------------------------------------------------------

TensorMap parse_tensors(std::string_view text);
std::string serialize_tensors(const TensorMap& tensors);
TensorMap load_tensors_file(const std::string& path);
void save_tensors_file(const TensorMap& tensors, const std::string& path);

}  // namespace retarget
