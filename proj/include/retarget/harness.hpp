// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0
//
// Equivalence checking and random graph/input generation. Everything is
// seeded and deterministic; per-trial inputs derive from (seed, trial), so
// trials are independent.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "retarget/interpreter.hpp"
#include "retarget/ir.hpp"
#include "retarget/rewriter.hpp"

namespace retarget {

struct DiffOutput {
  std::string name;  // as declared by the first graph
  Shape shape_a;
  Shape shape_b;
  double max_abs_diff = 0.0;
};

struct DiffReport {
  std::vector<DiffOutput> outputs;  // positional
  double worst_abs_diff = 0.0;
  double tolerance = 1e-6;
  int trials = 0;
  uint64_t seed = 0;
  bool pass = false;  // all diffs <= tolerance and all shapes equal
};

/// Runs both graphs on `trials` seeded random input sets (uniform in [-1,1]
/// for float inputs) and reports the worst-case per-output difference.
/// Requires matching input signatures and output counts; output shapes are
/// compared and reported.
DiffReport diff_graphs(const Graph& a, const Graph& b, int trials, double tolerance,
                       uint64_t seed);

/// Composes prefix -> defuse -> postprocess and diffs the composition
/// against the original graph.
DiffReport diff_split(const Graph& original, const SplitArtifacts& s, int trials,
                      double tolerance, uint64_t seed);

std::string diff_report_to_json(const DiffReport& report);

/// Deterministic random inputs for a graph's declared inputs: float32
/// uniform in [-1, 1], int64 uniform in [-3, 3], bool uniform.
TensorMap gen_random_inputs(const Graph& g, uint64_t seed);

struct GenParams {
  int node_count = 6;
  /// Ops the generator may draw. Empty means the whole vocabulary.
  std::vector<std::string> allowed_ops;
  /// Ops planted before random drawing starts (a planted Sub always
  /// subtracts a fresh constant).
  std::vector<std::string> must_include;
  /// When set, every generated Sub takes a constant second operand.
  bool const_sub_only = false;
};

/// Generates a validation-clean graph covering the requested ops. Identical
/// seeds and params yield identical graphs.
Graph gen_random_graph(uint64_t seed, const GenParams& params = {});

}  // namespace retarget
