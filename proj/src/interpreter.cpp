// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0

#include "retarget/interpreter.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

namespace retarget {

namespace {

[[noreturn]] void fail_run(const std::string& what) { throw InternalError(what); }

std::vector<int64_t> row_major_strides(const Shape& shape) {
  std::vector<int64_t> strides(shape.size(), 1);
  for (size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

}  // namespace

// ---------------------------------------------------------------------------
// TensorValue
// ---------------------------------------------------------------------------

TensorValue TensorValue::f32(Shape shape, std::vector<float> values) {
  TensorValue v;
  v.dtype = DType::Float32;
  v.shape = std::move(shape);
  v.data = std::move(values);
  if (v.size() != numel(v.shape)) fail_run("tensor payload does not match shape");
  return v;
}

TensorValue TensorValue::i64(Shape shape, std::vector<int64_t> values) {
  TensorValue v;
  v.dtype = DType::Int64;
  v.shape = std::move(shape);
  v.data = std::move(values);
  if (v.size() != numel(v.shape)) fail_run("tensor payload does not match shape");
  return v;
}

TensorValue TensorValue::boolean(Shape shape, std::vector<uint8_t> values) {
  TensorValue v;
  v.dtype = DType::Bool;
  v.shape = std::move(shape);
  v.data = std::move(values);
  if (v.size() != numel(v.shape)) fail_run("tensor payload does not match shape");
  return v;
}

TensorValue TensorValue::zeros(DType dtype, const Shape& shape) {
  size_t n = static_cast<size_t>(numel(shape));
  switch (dtype) {
    case DType::Float32: return f32(shape, std::vector<float>(n, 0.0f));
    case DType::Int64: return i64(shape, std::vector<int64_t>(n, 0));
    case DType::Bool: return boolean(shape, std::vector<uint8_t>(n, 0));
  }
  fail_run("unknown dtype");
}

std::vector<float>& TensorValue::floats() {
  if (auto* v = std::get_if<std::vector<float>>(&data)) return *v;
  fail_run("tensor is not float32");
}
const std::vector<float>& TensorValue::floats() const {
  return const_cast<TensorValue*>(this)->floats();
}
std::vector<int64_t>& TensorValue::ints() {
  if (auto* v = std::get_if<std::vector<int64_t>>(&data)) return *v;
  fail_run("tensor is not int64");
}
const std::vector<int64_t>& TensorValue::ints() const {
  return const_cast<TensorValue*>(this)->ints();
}
std::vector<uint8_t>& TensorValue::bools() {
  if (auto* v = std::get_if<std::vector<uint8_t>>(&data)) return *v;
  fail_run("tensor is not bool");
}
const std::vector<uint8_t>& TensorValue::bools() const {
  return const_cast<TensorValue*>(this)->bools();
}

TensorValue to_value(const Initializer& init) {
  TensorValue v;
  v.dtype = init.spec.dtype;
  v.shape = init.spec.shape;
  v.data = init.data;
  return v;
}

Initializer to_initializer(const std::string& name, const TensorValue& value) {
  return Initializer{{name, value.dtype, value.shape}, value.data};
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

namespace {

enum class BinOp { Add, Sub, Mul };

// Index of operand element feeding flat output index `i`, under the
// restricted broadcasting rules (equal shape, scalar, or [C,1,1] bias
// against NCHW).
struct BroadcastIndexer {
  enum Mode { Same, Scalar, ChannelBias } mode = Same;
  int64_t channels = 1;
  int64_t spatial = 1;  // H*W of the full operand

  static BroadcastIndexer make(const Shape& operand, const Shape& out) {
    BroadcastIndexer ix;
    if (operand == out) {
      ix.mode = Same;
    } else if (numel(operand) == 1) {
      ix.mode = Scalar;
    } else {
      ix.mode = ChannelBias;
      ix.channels = operand[0];
      ix.spatial = out[2] * out[3];
    }
    return ix;
  }

  int64_t operator()(int64_t flat) const {
    switch (mode) {
      case Same: return flat;
      case Scalar: return 0;
      case ChannelBias: return (flat / spatial) % channels;
    }
    return flat;
  }
};

TensorValue eval_binary(BinOp op, const TensorValue& a, const TensorValue& b,
                        const Shape& out_shape) {
  const auto ia = BroadcastIndexer::make(a.shape, out_shape);
  const auto ib = BroadcastIndexer::make(b.shape, out_shape);
  const auto& av = a.floats();
  const auto& bv = b.floats();
  std::vector<float> out(static_cast<size_t>(numel(out_shape)));
  for (int64_t i = 0; i < static_cast<int64_t>(out.size()); ++i) {
    float x = av[static_cast<size_t>(ia(i))];
    float y = bv[static_cast<size_t>(ib(i))];
    switch (op) {
      case BinOp::Add: out[static_cast<size_t>(i)] = x + y; break;
      case BinOp::Sub: out[static_cast<size_t>(i)] = x - y; break;
      case BinOp::Mul: out[static_cast<size_t>(i)] = x * y; break;
    }
  }
  return TensorValue::f32(out_shape, std::move(out));
}

TensorValue eval_softmax(const TensorValue& x, int64_t axis) {
  const int64_t rank = static_cast<int64_t>(x.shape.size());
  if (axis < 0) axis += rank;
  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < axis; ++d) outer *= x.shape[d];
  for (int64_t d = axis + 1; d < rank; ++d) inner *= x.shape[d];
  const int64_t n = x.shape[axis];
  const auto& xv = x.floats();
  std::vector<float> out(xv.size());
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      const int64_t base = o * n * inner + i;
      float max_v = xv[base];
      for (int64_t a = 1; a < n; ++a)
        max_v = std::max(max_v, xv[base + a * inner]);
      double sum = 0.0;
      for (int64_t a = 0; a < n; ++a)
        sum += std::exp(static_cast<double>(xv[base + a * inner]) - max_v);
      for (int64_t a = 0; a < n; ++a)
        out[base + a * inner] = static_cast<float>(
            std::exp(static_cast<double>(xv[base + a * inner]) - max_v) / sum);
    }
  }
  return TensorValue::f32(x.shape, std::move(out));
}

TensorValue eval_conv2d(const TensorValue& x, const TensorValue& w, int64_t sh,
                        int64_t sw, int64_t ph, int64_t pw, const Shape& out_shape) {
  const int64_t N = x.shape[0], Cin = x.shape[1], H = x.shape[2], W = x.shape[3];
  const int64_t Cout = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  const int64_t Hout = out_shape[2], Wout = out_shape[3];
  const auto& xv = x.floats();
  const auto& wv = w.floats();
  std::vector<float> out(static_cast<size_t>(numel(out_shape)));
  for (int64_t n = 0; n < N; ++n)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t oh = 0; oh < Hout; ++oh)
        for (int64_t ow = 0; ow < Wout; ++ow) {
          double acc = 0.0;
          for (int64_t ci = 0; ci < Cin; ++ci)
            for (int64_t i = 0; i < kh; ++i) {
              const int64_t h = oh * sh - ph + i;
              if (h < 0 || h >= H) continue;
              for (int64_t j = 0; j < kw; ++j) {
                const int64_t ww = ow * sw - pw + j;
                if (ww < 0 || ww >= W) continue;
                acc += static_cast<double>(xv[((n * Cin + ci) * H + h) * W + ww]) *
                       static_cast<double>(wv[((co * Cin + ci) * kh + i) * kw + j]);
              }
            }
          out[((n * Cout + co) * Hout + oh) * Wout + ow] = static_cast<float>(acc);
        }
  return TensorValue::f32(out_shape, std::move(out));
}

// Gather form: for each output pixel, sum the input pixels that map onto it.
// The test-side oracle uses the scatter form, so the two stay independent.
TensorValue eval_convtranspose2d(const TensorValue& x, const TensorValue& w, int64_t sh,
                                 int64_t sw, int64_t ph, int64_t pw,
                                 const Shape& out_shape) {
  const int64_t N = x.shape[0], Cin = x.shape[1], H = x.shape[2], W = x.shape[3];
  const int64_t Cout = w.shape[1], kh = w.shape[2], kw = w.shape[3];
  const int64_t Hout = out_shape[2], Wout = out_shape[3];
  const auto& xv = x.floats();
  const auto& wv = w.floats();
  std::vector<float> out(static_cast<size_t>(numel(out_shape)));
  for (int64_t n = 0; n < N; ++n)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t oh = 0; oh < Hout; ++oh)
        for (int64_t ow = 0; ow < Wout; ++ow) {
          double acc = 0.0;
          for (int64_t i = 0; i < kh; ++i) {
            const int64_t hs = oh + ph - i;
            if (hs < 0 || hs % sh != 0) continue;
            const int64_t h = hs / sh;
            if (h >= H) continue;
            for (int64_t j = 0; j < kw; ++j) {
              const int64_t ws = ow + pw - j;
              if (ws < 0 || ws % sw != 0) continue;
              const int64_t wwi = ws / sw;
              if (wwi >= W) continue;
              for (int64_t ci = 0; ci < Cin; ++ci)
                acc += static_cast<double>(xv[((n * Cin + ci) * H + h) * W + wwi]) *
                       static_cast<double>(wv[((ci * Cout + co) * kh + i) * kw + j]);
            }
          }
          out[((n * Cout + co) * Hout + oh) * Wout + ow] = static_cast<float>(acc);
        }
  return TensorValue::f32(out_shape, std::move(out));
}

// Gathers src elements by precomputed flat indices, preserving dtype.
TensorValue gather_elements(const TensorValue& src, const Shape& out_shape,
                            const std::vector<int64_t>& indices) {
  TensorValue out = TensorValue::zeros(src.dtype, out_shape);
  std::visit(
      [&](auto& dst) {
        using Vec = std::decay_t<decltype(dst)>;
        const Vec& s = std::get<Vec>(src.data);
        for (size_t i = 0; i < indices.size(); ++i)
          dst[i] = s[static_cast<size_t>(indices[i])];
      },
      out.data);
  return out;
}

TensorValue eval_transpose(const TensorValue& x, const std::vector<int64_t>& perm) {
  Shape out_shape(x.shape.size());
  for (size_t i = 0; i < perm.size(); ++i) out_shape[i] = x.shape[perm[i]];
  const auto in_strides = row_major_strides(x.shape);
  const auto out_strides = row_major_strides(out_shape);
  const int64_t total = numel(out_shape);
  std::vector<int64_t> indices(static_cast<size_t>(total));
  for (int64_t flat = 0; flat < total; ++flat) {
    int64_t src = 0, rem = flat;
    for (size_t d = 0; d < out_shape.size(); ++d) {
      const int64_t coord = rem / out_strides[d];
      rem %= out_strides[d];
      src += coord * in_strides[perm[d]];
    }
    indices[static_cast<size_t>(flat)] = src;
  }
  return gather_elements(x, out_shape, indices);
}

TensorValue eval_slice(const TensorValue& x, const std::vector<int64_t>& starts,
                       const std::vector<int64_t>& ends, const std::vector<int64_t>& axes,
                       const Shape& out_shape) {
  std::vector<int64_t> offset(x.shape.size(), 0);
  for (size_t i = 0; i < axes.size(); ++i) offset[axes[i]] = starts[i];
  (void)ends;
  const auto in_strides = row_major_strides(x.shape);
  const auto out_strides = row_major_strides(out_shape);
  const int64_t total = numel(out_shape);
  std::vector<int64_t> indices(static_cast<size_t>(total));
  for (int64_t flat = 0; flat < total; ++flat) {
    int64_t src = 0, rem = flat;
    for (size_t d = 0; d < out_shape.size(); ++d) {
      const int64_t coord = rem / out_strides[d] + offset[d];
      rem %= out_strides[d];
      src += coord * in_strides[d];
    }
    indices[static_cast<size_t>(flat)] = src;
  }
  return gather_elements(x, out_shape, indices);
}

TensorValue eval_concat(const std::vector<const TensorValue*>& parts, int64_t axis,
                        const Shape& out_shape) {
  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < axis; ++d) outer *= out_shape[d];
  for (size_t d = axis + 1; d < out_shape.size(); ++d) inner *= out_shape[d];

  TensorValue out = TensorValue::zeros(parts[0]->dtype, out_shape);
  std::visit(
      [&](auto& dst) {
        using Vec = std::decay_t<decltype(dst)>;
        size_t write = 0;
        for (int64_t o = 0; o < outer; ++o)
          for (const TensorValue* part : parts) {
            const Vec& s = std::get<Vec>(part->data);
            const int64_t block = part->shape[axis] * inner;
            const size_t start = static_cast<size_t>(o * block);
            std::copy(s.begin() + start, s.begin() + start + block, dst.begin() + write);
            write += static_cast<size_t>(block);
          }
      },
      out.data);
  return out;
}

TensorValue eval_depth_to_space(const TensorValue& x, int64_t b, const Shape& out_shape) {
  // Channel-major block layout: out[n][c][h*b+i][w*b+j] = in[n][c*b*b+i*b+j][h][w].
  const int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const int64_t Cout = C / (b * b);
  std::vector<int64_t> indices(static_cast<size_t>(numel(out_shape)));
  size_t flat = 0;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < Cout; ++c)
      for (int64_t oh = 0; oh < H * b; ++oh)
        for (int64_t ow = 0; ow < W * b; ++ow) {
          const int64_t ci = c * b * b + (oh % b) * b + (ow % b);
          indices[flat++] = ((n * C + ci) * H + oh / b) * W + ow / b;
        }
  return gather_elements(x, out_shape, indices);
}

TensorValue eval_cast(const TensorValue& x, DType to, const Shape& shape) {
  if (x.dtype == to) {
    TensorValue out = x;
    out.shape = shape;
    return out;
  }
  if (x.dtype == DType::Float32 && to == DType::Int64) {
    const auto& xv = x.floats();
    std::vector<int64_t> out(xv.size());
    for (size_t i = 0; i < xv.size(); ++i)
      out[i] = static_cast<int64_t>(xv[i]);  // truncation toward zero
    return TensorValue::i64(shape, std::move(out));
  }
  if (x.dtype == DType::Int64 && to == DType::Float32) {
    const auto& xv = x.ints();
    std::vector<float> out(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) out[i] = static_cast<float>(xv[i]);
    return TensorValue::f32(shape, std::move(out));
  }
  fail_run("unsupported cast");
}

TensorValue eval_node(const Node& n, const std::vector<const TensorValue*>& in,
                      const TensorSpec& out_spec) {
  const std::string& op = n.op_type;

  if (op == "Add") return eval_binary(BinOp::Add, *in[0], *in[1], out_spec.shape);
  if (op == "Sub") return eval_binary(BinOp::Sub, *in[0], *in[1], out_spec.shape);
  if (op == "Mul") return eval_binary(BinOp::Mul, *in[0], *in[1], out_spec.shape);

  if (op == "Neg") {
    std::vector<float> out = in[0]->floats();
    for (float& v : out) v = -v;
    return TensorValue::f32(out_spec.shape, std::move(out));
  }
  if (op == "Relu") {
    std::vector<float> out = in[0]->floats();
    for (float& v : out) v = std::max(v, 0.0f);
    return TensorValue::f32(out_spec.shape, std::move(out));
  }
  if (op == "Softmax") return eval_softmax(*in[0], n.attr_int("axis"));

  if (op == "Reshape" || op == "Flatten" || op == "Dropout") {
    // Pure metadata / identity at inference; payload is untouched.
    TensorValue out = *in[0];
    out.shape = out_spec.shape;
    return out;
  }

  if (op == "Transpose") return eval_transpose(*in[0], n.attr_ints("perm"));
  if (op == "Slice")
    return eval_slice(*in[0], n.attr_ints("starts"), n.attr_ints("ends"),
                      n.attr_ints("axes"), out_spec.shape);
  if (op == "Concat") return eval_concat(in, n.attr_int("axis"), out_spec.shape);

  if (op == "Conv2D") {
    auto [sh, sw] = n.attr_int_pair_or("stride", 1);
    auto [ph, pw] = n.attr_int_pair_or("pad", 0);
    return eval_conv2d(*in[0], *in[1], sh, sw, ph, pw, out_spec.shape);
  }
  if (op == "ConvTranspose2D") {
    auto [sh, sw] = n.attr_int_pair_or("stride", 1);
    auto [ph, pw] = n.attr_int_pair_or("pad", 0);
    return eval_convtranspose2d(*in[0], *in[1], sh, sw, ph, pw, out_spec.shape);
  }
  if (op == "DepthToSpace")
    return eval_depth_to_space(*in[0], n.attr_int("blocksize"), out_spec.shape);
  if (op == "Cast") return eval_cast(*in[0], out_spec.dtype, out_spec.shape);

  if (is_custom_op(op))
    throw UsageError("cannot execute node '" + n.id + "': the reference interpreter has no implementation for custom op '" + op + "'");
  fail_run("no kernel for op '" + op + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// run_graph / bench
// ---------------------------------------------------------------------------

TensorMap run_graph(const Graph& g, const TensorMap& inputs) {
  if (inputs.size() != g.inputs.size())
    throw UsageError("expected " + std::to_string(g.inputs.size()) + " inputs, got " +
                     std::to_string(inputs.size()));
  for (const auto& spec : g.inputs) {
    auto it = inputs.find(spec.name);
    if (it == inputs.end()) throw UsageError("missing input '" + spec.name + "'");
    if (it->second.dtype != spec.dtype || it->second.shape != spec.shape)
      throw UsageError("input '" + spec.name + "' does not match its declared spec");
  }

  const auto specs = infer_shapes(g);

  TensorMap env = inputs;
  for (const auto& init : g.initializers) env[init.spec.name] = to_value(init);

  for (size_t i : toposort(g)) {
    const Node& n = g.nodes[i];
    std::vector<const TensorValue*> in;
    in.reserve(n.inputs.size());
    for (const auto& name : n.inputs) {
      auto it = env.find(name);
      if (it == env.end()) fail_run("value '" + name + "' not materialized");
      in.push_back(&it->second);
    }
    TensorValue out = eval_node(n, in, specs.at(n.outputs[0]));
    env[n.outputs[0]] = std::move(out);
  }

  TensorMap result;
  for (const auto& name : g.outputs) {
    auto it = env.find(name);
    if (it == env.end()) fail_run("graph output '" + name + "' not materialized");
    result[name] = it->second;
  }
  return result;
}

BenchReport bench(const Graph& g, const TensorMap& inputs, int repetitions) {
  if (repetitions < 1) throw UsageError("bench needs at least one repetition");

  BenchReport report;
  const auto specs = infer_shapes(g);
  const auto order = toposort(g);

  for (const Node& n : g.nodes) {
    if (n.op_type == "Conv2D") {
      const TensorSpec& x = specs.at(n.inputs[0]);
      const TensorSpec& w = specs.at(n.inputs[1]);
      const TensorSpec& y = specs.at(n.outputs[0]);
      report.multiply_accumulate_count +=
          y.shape[0] * y.shape[1] * y.shape[2] * y.shape[3] * x.shape[1] * w.shape[2] *
          w.shape[3];
    } else if (n.op_type == "ConvTranspose2D") {
      const TensorSpec& x = specs.at(n.inputs[0]);
      const TensorSpec& w = specs.at(n.inputs[1]);
      report.multiply_accumulate_count += x.shape[0] * x.shape[1] * x.shape[2] *
                                          x.shape[3] * w.shape[1] * w.shape[2] *
                                          w.shape[3];
    }
  }

  // Peak live bytes under execution order, freeing every value right after
  // its last consumer runs. Inputs and weights are live from the start;
  // declared outputs are held to the end.
  {
    std::map<std::string, size_t> last_use;  // value -> position in order
    for (size_t pos = 0; pos < order.size(); ++pos)
      for (const auto& in : g.nodes[order[pos]].inputs) last_use[in] = pos;
    std::set<std::string> held(g.outputs.begin(), g.outputs.end());
    auto bytes_of = [&](const std::string& name) {
      const TensorSpec& s = specs.at(name);
      return numel(s.shape) * dtype_size_bytes(s.dtype);
    };

    int64_t live = 0;
    std::vector<std::pair<std::string, int64_t>> alive;
    auto acquire = [&](const std::string& name) {
      int64_t b = bytes_of(name);
      live += b;
      alive.emplace_back(name, b);
    };
    auto release_dead = [&](size_t pos) {
      for (auto it = alive.begin(); it != alive.end();) {
        auto lu = last_use.find(it->first);
        const bool dead = (lu == last_use.end() || lu->second <= pos) &&
                          !held.count(it->first);
        if (dead) {
          live -= it->second;
          it = alive.erase(it);
        } else {
          ++it;
        }
      }
    };

    for (const auto& in : g.inputs) acquire(in.name);
    for (const auto& init : g.initializers) acquire(init.spec.name);
    report.peak_live_tensor_bytes = live;
    release_dead(static_cast<size_t>(-1));  // free unconsumed constants

    for (size_t pos = 0; pos < order.size(); ++pos) {
      for (const auto& out : g.nodes[order[pos]].outputs) acquire(out);
      report.peak_live_tensor_bytes = std::max(report.peak_live_tensor_bytes, live);
      release_dead(pos);
    }
  }

  using clock = std::chrono::steady_clock;
  const auto t_begin = clock::now();
  for (int r = 0; r < repetitions; ++r) {
    const auto t0 = clock::now();
    run_graph(g, inputs);
    const auto t1 = clock::now();
    report.wall_latency_ms.push_back(
        std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  const double total_s =
      std::chrono::duration<double>(clock::now() - t_begin).count();
  report.throughput_per_s = repetitions / std::max(total_s, 1e-12);
  return report;
}

}  // namespace retarget
