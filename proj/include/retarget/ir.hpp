// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0
//
// Core computation-graph data model: tensor specs, initializers, nodes,
// graphs, the op vocabulary, validation, topological ordering, static shape
// inference and constant detection. Graphs are immutable after construction;
// every function here is a pure function of its arguments.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace retarget {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed interchange text (bad JSON, wrong field types, bad version).
struct ParseError : Error {
  using Error::Error;
};

/// A structurally invalid graph: cycle, duplicate producer, dangling input,
/// unknown op, bad attribute. Messages name the offending node where known.
struct ValidationError : Error {
  using Error::Error;
};

/// Shape inference failed; message names the node and the conflicting dims.
struct ShapeError : Error {
  using Error::Error;
};

/// Caller violated a documented precondition (CLI surfaces these as usage
/// errors, exit code 2).
struct UsageError : Error {
  using Error::Error;
};

/// A condition that should be unreachable after validation.
struct InternalError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Tensor metadata
// ---------------------------------------------------------------------------

enum class DType { Float32, Int64, Bool };

std::string_view dtype_name(DType dt);
std::optional<DType> dtype_from_name(std::string_view name);
int64_t dtype_size_bytes(DType dt);

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& shape);

/// Name, dtype and concrete shape of one value in a graph. Rank 0 denotes a
/// scalar; all dimensions of a concrete tensor are >= 1.
struct TensorSpec {
  std::string name;
  DType dtype = DType::Float32;
  Shape shape;

  bool operator==(const TensorSpec&) const = default;
};

/// Flat row-major payload of a constant. Exactly one alternative is active
/// and it must agree with the declared dtype.
using TensorData =
    std::variant<std::vector<float>, std::vector<int64_t>, std::vector<uint8_t>>;

DType data_dtype(const TensorData& data);
int64_t data_size(const TensorData& data);

struct Initializer {
  TensorSpec spec;
  TensorData data;

  bool operator==(const Initializer&) const = default;
};

// ---------------------------------------------------------------------------
// Nodes and attributes
// ---------------------------------------------------------------------------

using AttrValue = std::variant<int64_t, double, std::string, std::vector<int64_t>>;

struct Node {
  std::string id;
  std::string op_type;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::map<std::string, AttrValue> attrs;

  bool has_attr(std::string_view name) const;
  /// Typed accessors. Integral values satisfy float lookups; everything else
  /// throws ValidationError (validation rejects such graphs up front).
  int64_t attr_int(std::string_view name) const;
  int64_t attr_int_or(std::string_view name, int64_t fallback) const;
  double attr_float_or(std::string_view name, double fallback) const;
  const std::string& attr_string(std::string_view name) const;
  const std::vector<int64_t>& attr_ints(std::string_view name) const;
  /// For attributes accepting a scalar or an [h, w] pair (Conv2D stride/pad).
  std::pair<int64_t, int64_t> attr_int_pair_or(std::string_view name,
                                               int64_t fallback) const;

  bool operator==(const Node&) const = default;
};

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

struct Graph {
  std::string name;
  std::vector<TensorSpec> inputs;
  std::vector<std::string> outputs;
  std::vector<Initializer> initializers;
  std::vector<Node> nodes;

  bool operator==(const Graph&) const = default;
};

// ---------------------------------------------------------------------------
// Op vocabulary
// ---------------------------------------------------------------------------

/// All operation names understood by the toolkit (v1).
const std::vector<std::string>& op_vocabulary();

bool is_vocabulary_op(std::string_view op_type);

/// Custom ops are spelled "Custom:<name>" with a non-empty name.
bool is_custom_op(std::string_view op_type);

/// Nearest vocabulary member by edit distance, for error suggestions.
std::string nearest_vocabulary_op(std::string_view op_type);

// ---------------------------------------------------------------------------
// Validation / ordering / shapes
// ---------------------------------------------------------------------------

/// Where a value comes from. Node producers store the node index.
struct Producer {
  enum Kind { GraphInput, InitializerValue, NodeOutput } kind;
  size_t index;
};

/// Producer/consumer maps over an already validated graph.
struct GraphIndex {
  std::map<std::string, Producer> producers;
  std::map<std::string, std::vector<size_t>> consumers;  // value -> node indices
};

GraphIndex index_graph(const Graph& g);

/// Checks every structural invariant: unique non-empty value names
/// (single assignment), known ops with legal attributes and arity, inputs all
/// produced somewhere, declared outputs produced, dims >= 1, initializer
/// payload sizes, acyclicity. Throws ValidationError with the node id and
/// reason on the first violation.
void validate(const Graph& g);

/// Deterministic topological order of node indices. Ties are broken by node
/// id ascending. Requires a validated (acyclic) graph.
std::vector<size_t> toposort(const Graph& g);

/// Concrete dtype and shape for every value in the graph (inputs,
/// initializers and all node outputs). Throws ShapeError naming the node on
/// any inconsistency.
std::map<std::string, TensorSpec> infer_shapes(const Graph& g);

/// Seed nodes plus every node reachable downstream of them, as indices into
/// g.nodes.
std::set<size_t> descendant_closure(const Graph& g, const GraphIndex& idx,
                                    const std::set<size_t>& seeds);

// ---------------------------------------------------------------------------
// Interchange format (.nng.json)
// ---------------------------------------------------------------------------

/// Parses the textual interchange format and validates the result.
/// The format is a single JSON object with fields exactly:
///   format_version (must be 1), name, inputs, outputs, initializers, nodes.
Graph parse_model(std::string_view text);

/// Canonical serialization: sorted object keys, two-space indentation,
/// shortest round-trip float formatting. parse_model(serialize_model(g)) == g
/// for every valid graph.
std::string serialize_model(const Graph& g);

Graph load_model_file(const std::string& path);
void save_model_file(const Graph& g, const std::string& path);

// ---------------------------------------------------------------------------
// Constant detection
// ---------------------------------------------------------------------------

/// Folded value of `value_name` when it is a compile-time constant: either an
/// initializer or computed only from initializers (graph inputs are never
/// constant, custom ops are never folded). Returns nullopt otherwise.
/// Folding runs the reference interpreter over the constant ancestor set.
std::optional<Initializer> constant_value(const Graph& g,
                                          const std::string& value_name);

bool is_constant(const Graph& g, const std::string& value_name);

}  // namespace retarget
