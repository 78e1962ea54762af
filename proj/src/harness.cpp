// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0

#include "retarget/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

namespace retarget {

using nlohmann::json;

namespace {

uint64_t trial_seed(uint64_t seed, uint64_t trial) {
  // splitmix64 over (seed, trial)
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (trial + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double max_abs_difference(const TensorValue& a, const TensorValue& b) {
  if (a.dtype != b.dtype || a.shape != b.shape)
    return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  std::visit(
      [&](const auto& av) {
        using Vec = std::decay_t<decltype(av)>;
        const Vec& bv = std::get<Vec>(b.data);
        for (size_t i = 0; i < av.size(); ++i)
          worst = std::max(worst, std::abs(static_cast<double>(av[i]) -
                                           static_cast<double>(bv[i])));
      },
      a.data);
  return worst;
}

void require_same_inputs(const Graph& a, const Graph& b) {
  auto key = [](const Graph& g) {
    std::vector<TensorSpec> specs = g.inputs;
    std::sort(specs.begin(), specs.end(),
              [](const TensorSpec& x, const TensorSpec& y) { return x.name < y.name; });
    return specs;
  };
  if (key(a) != key(b))
    throw UsageError("graphs '" + a.name + "' and '" + b.name +
                     "' have different input signatures");
}

DiffReport diff_with_runner(
    const Graph& a, const std::vector<std::string>& b_output_names,
    const std::function<TensorMap(const TensorMap&)>& run_b, int trials,
    double tolerance, uint64_t seed) {
  if (trials < 1) throw UsageError("diff needs at least one trial");
  const auto a_shapes = infer_shapes(a);

  DiffReport report;
  report.tolerance = tolerance;
  report.trials = trials;
  report.seed = seed;
  for (const auto& name : a.outputs) report.outputs.push_back(DiffOutput{name, {}, {}, 0});

  for (int t = 0; t < trials; ++t) {
    TensorMap inputs = gen_random_inputs(a, trial_seed(seed, static_cast<uint64_t>(t)));
    TensorMap out_a = run_graph(a, inputs);
    TensorMap out_b = run_b(inputs);
    for (size_t i = 0; i < a.outputs.size(); ++i) {
      const TensorValue& va = out_a.at(a.outputs[i]);
      const TensorValue& vb = out_b.at(b_output_names[i]);
      DiffOutput& slot = report.outputs[i];
      slot.shape_a = va.shape;
      slot.shape_b = vb.shape;
      slot.max_abs_diff = std::max(slot.max_abs_diff, max_abs_difference(va, vb));
    }
  }

  bool ok = true;
  for (const auto& o : report.outputs) {
    report.worst_abs_diff = std::max(report.worst_abs_diff, o.max_abs_diff);
    if (o.shape_a != o.shape_b || !(o.max_abs_diff <= tolerance)) ok = false;
  }
  report.pass = ok;
  return report;
}

}  // namespace

DiffReport diff_graphs(const Graph& a, const Graph& b, int trials, double tolerance,
                       uint64_t seed) {
  require_same_inputs(a, b);
  if (a.outputs.size() != b.outputs.size())
    throw UsageError("graphs declare different output counts (" +
                     std::to_string(a.outputs.size()) + " vs " +
                     std::to_string(b.outputs.size()) + ")");
  return diff_with_runner(
      a, b.outputs, [&](const TensorMap& inputs) { return run_graph(b, inputs); },
      trials, tolerance, seed);
}

DiffReport diff_split(const Graph& original, const SplitArtifacts& s, int trials,
                      double tolerance, uint64_t seed) {
  require_same_inputs(original, s.prefix);
  if (original.outputs.size() != s.postprocess.outputs.size())
    throw UsageError("split postprocess declares different output count");

  auto run_composition = [&](const TensorMap& inputs) {
    TensorMap prefix_out = run_graph(s.prefix, inputs);
    TensorMap cut_values;
    if (s.fused_output_name) {
      cut_values = defuse(s.fusion_manifest, prefix_out.at(*s.fused_output_name));
    } else {
      for (const auto& entry : s.fusion_manifest)
        cut_values[entry.value_name] = prefix_out.at(entry.value_name);
    }
    return run_graph(s.postprocess, cut_values);
  };
  return diff_with_runner(original, s.postprocess.outputs, run_composition, trials,
                          tolerance, seed);
}

std::string diff_report_to_json(const DiffReport& report) {
  json root;
  json outs = json::array();
  for (const auto& o : report.outputs) {
    json jo;
    jo["name"] = o.name;
    jo["shape_a"] = o.shape_a;
    jo["shape_b"] = o.shape_b;
    jo["max_abs_diff"] = o.max_abs_diff;
    outs.push_back(std::move(jo));
  }
  root["outputs"] = std::move(outs);
  root["worst_abs_diff"] = report.worst_abs_diff;
  root["tolerance"] = report.tolerance;
  root["trials"] = report.trials;
  root["seed"] = report.seed;
  root["pass"] = report.pass;
  return root.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Random inputs
// ---------------------------------------------------------------------------

TensorMap gen_random_inputs(const Graph& g, uint64_t seed) {
  TensorMap inputs;
  uint64_t salt = 0;
  for (const auto& spec : g.inputs) {
    std::mt19937_64 rng(trial_seed(seed, salt++));
    const size_t n = static_cast<size_t>(numel(spec.shape));
    switch (spec.dtype) {
      case DType::Float32: {
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        std::vector<float> data(n);
        for (auto& v : data) v = static_cast<float>(dist(rng));
        inputs[spec.name] = TensorValue::f32(spec.shape, std::move(data));
        break;
      }
      case DType::Int64: {
        std::uniform_int_distribution<int64_t> dist(-3, 3);
        std::vector<int64_t> data(n);
        for (auto& v : data) v = dist(rng);
        inputs[spec.name] = TensorValue::i64(spec.shape, std::move(data));
        break;
      }
      case DType::Bool: {
        std::uniform_int_distribution<int> dist(0, 1);
        std::vector<uint8_t> data(n);
        for (auto& v : data) v = static_cast<uint8_t>(dist(rng));
        inputs[spec.name] = TensorValue::boolean(spec.shape, std::move(data));
        break;
      }
    }
  }
  return inputs;
}

// ---------------------------------------------------------------------------
// Random graphs
// ---------------------------------------------------------------------------

namespace {

struct GenState {
  std::mt19937_64 rng;
  Graph g;
  std::vector<TensorSpec> pool;  // values available as operands
  std::set<std::string> consumed;
  int value_counter = 0;
  int node_counter = 0;
  int init_counter = 0;

  int64_t rand_int(int64_t lo, int64_t hi) {  // inclusive
    return std::uniform_int_distribution<int64_t>(lo, hi)(rng);
  }
  double rand_unit() { return std::uniform_real_distribution<double>(-1.0, 1.0)(rng); }

  std::string next_value() { return "v" + std::to_string(value_counter++); }
  std::string next_node() {
    // zero-padded so lexicographic tie-breaks follow creation order
    std::string n = std::to_string(node_counter++);
    return "n" + std::string(3 - std::min<size_t>(3, n.size()), '0') + n;
  }

  std::string add_const(DType dtype, const Shape& shape) {
    Initializer init;
    init.spec.name = "c" + std::to_string(init_counter++);
    init.spec.dtype = dtype;
    init.spec.shape = shape;
    const size_t n = static_cast<size_t>(numel(shape));
    if (dtype == DType::Float32) {
      std::vector<float> data(n);
      for (auto& v : data) v = static_cast<float>(rand_unit());
      init.data = std::move(data);
    } else {
      std::vector<int64_t> data(n);
      for (auto& v : data) v = rand_int(-3, 3);
      init.data = std::move(data);
    }
    g.initializers.push_back(init);
    return g.initializers.back().spec.name;
  }

  void emit(const std::string& op, std::vector<std::string> node_inputs,
            std::map<std::string, AttrValue> attrs, const TensorSpec& out_spec) {
    Node n;
    n.id = next_node();
    n.op_type = op;
    n.inputs = std::move(node_inputs);
    n.outputs = {out_spec.name};
    n.attrs = std::move(attrs);
    g.nodes.push_back(std::move(n));
    for (const auto& in : g.nodes.back().inputs) consumed.insert(in);
    pool.push_back(out_spec);
  }

  // A random pool value, optionally filtered; nullptr when none qualifies.
  const TensorSpec* pick(const std::function<bool(const TensorSpec&)>& want) {
    std::vector<size_t> ok;
    for (size_t i = 0; i < pool.size(); ++i)
      if (want(pool[i])) ok.push_back(i);
    if (ok.empty()) return nullptr;
    return &pool[ok[static_cast<size_t>(rand_int(0, static_cast<int64_t>(ok.size()) - 1))]];
  }
};

constexpr int64_t kMaxElements = 8192;

bool any_f32(const TensorSpec& s) { return s.dtype == DType::Float32; }

// Emits one node of the requested op if the pool admits it.
bool try_emit(GenState& st, const std::string& op, bool const_sub_only) {
  if (op == "Add" || op == "Sub" || op == "Mul") {
    const TensorSpec* a = st.pick(any_f32);
    if (!a) return false;
    std::string rhs;
    const bool force_const = op == "Sub" && const_sub_only;
    if (!force_const && st.rand_int(0, 1) == 0) {
      const TensorSpec* b =
          st.pick([&](const TensorSpec& s) { return any_f32(s) && s.shape == a->shape; });
      if (b) rhs = b->name;
    }
    if (rhs.empty()) {
      // scalar, matching-shape, or per-channel constant
      Shape cshape;
      switch (st.rand_int(0, a->shape.size() == 4 ? 2 : 1)) {
        case 0: cshape = {1}; break;
        case 1: cshape = a->shape; break;
        default: cshape = {a->shape[1], 1, 1}; break;
      }
      rhs = st.add_const(DType::Float32, cshape);
    }
    st.emit(op, {a->name, rhs}, {}, {st.next_value(), DType::Float32, a->shape});
    return true;
  }

  if (op == "Neg" || op == "Relu" || op == "Dropout") {
    const TensorSpec* a = op == "Dropout"
                              ? st.pick([](const TensorSpec&) { return true; })
                              : st.pick(any_f32);
    if (!a) return false;
    std::map<std::string, AttrValue> attrs;
    if (op == "Dropout") attrs["ratio"] = 0.5;
    st.emit(op, {a->name}, std::move(attrs), {st.next_value(), a->dtype, a->shape});
    return true;
  }

  if (op == "Softmax") {
    const TensorSpec* a =
        st.pick([](const TensorSpec& s) { return any_f32(s) && !s.shape.empty(); });
    if (!a) return false;
    const int64_t axis = st.rand_int(0, static_cast<int64_t>(a->shape.size()) - 1);
    st.emit(op, {a->name}, {{"axis", axis}}, {st.next_value(), DType::Float32, a->shape});
    return true;
  }

  if (op == "Reshape" || op == "Flatten") {
    const TensorSpec* a = st.pick([](const TensorSpec&) { return true; });
    if (!a) return false;
    if (op == "Flatten") {
      st.emit(op, {a->name}, {}, {st.next_value(), a->dtype, {numel(a->shape)}});
      return true;
    }
    const int64_t n = numel(a->shape);
    int64_t d = 1;
    for (int attempt = 0; attempt < 4; ++attempt) {
      int64_t candidate = st.rand_int(1, n);
      if (n % candidate == 0) {
        d = candidate;
        break;
      }
    }
    Shape target = d == 1 || d == n ? Shape{n} : Shape{d, n / d};
    st.emit(op, {a->name}, {{"shape", target}}, {st.next_value(), a->dtype, target});
    return true;
  }

  if (op == "Transpose") {
    const TensorSpec* a =
        st.pick([](const TensorSpec& s) { return !s.shape.empty(); });
    if (!a) return false;
    std::vector<int64_t> perm(a->shape.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int64_t>(i);
    std::shuffle(perm.begin(), perm.end(), st.rng);
    Shape out(a->shape.size());
    for (size_t i = 0; i < perm.size(); ++i) out[i] = a->shape[perm[i]];
    st.emit(op, {a->name}, {{"perm", perm}}, {st.next_value(), a->dtype, out});
    return true;
  }

  if (op == "Concat") {
    const TensorSpec* a = st.pick([](const TensorSpec& s) {
      return !s.shape.empty() && numel(s.shape) * 2 <= kMaxElements;
    });
    if (!a) return false;
    const int64_t axis = st.rand_int(0, static_cast<int64_t>(a->shape.size()) - 1);
    Shape out = a->shape;
    out[axis] *= 2;
    st.emit(op, {a->name, a->name}, {{"axis", axis}}, {st.next_value(), a->dtype, out});
    return true;
  }

  if (op == "Slice") {
    const TensorSpec* a = st.pick([](const TensorSpec& s) {
      return std::any_of(s.shape.begin(), s.shape.end(), [](int64_t d) { return d >= 2; });
    });
    if (!a) return false;
    std::vector<int64_t> axes;
    for (size_t i = 0; i < a->shape.size(); ++i)
      if (a->shape[i] >= 2) axes.push_back(static_cast<int64_t>(i));
    const int64_t axis = axes[static_cast<size_t>(
        st.rand_int(0, static_cast<int64_t>(axes.size()) - 1))];
    const int64_t dim = a->shape[axis];
    const int64_t start = st.rand_int(0, dim - 1);
    const int64_t end = st.rand_int(start + 1, dim);
    Shape out = a->shape;
    out[axis] = end - start;
    st.emit(op, {a->name},
            {{"starts", std::vector<int64_t>{start}},
             {"ends", std::vector<int64_t>{end}},
             {"axes", std::vector<int64_t>{axis}}},
            {st.next_value(), a->dtype, out});
    return true;
  }

  if (op == "Conv2D" || op == "ConvTranspose2D") {
    const TensorSpec* a = st.pick([](const TensorSpec& s) {
      return any_f32(s) && s.shape.size() == 4 && s.shape[2] >= 1 && s.shape[3] >= 1;
    });
    if (!a) return false;
    const int64_t cin = a->shape[1], h = a->shape[2], w = a->shape[3];
    const int64_t cout = st.rand_int(1, 3);
    const int64_t k = st.rand_int(1, std::min<int64_t>(3, std::min(h, w)));
    const int64_t s = st.rand_int(1, 2);
    const int64_t p = st.rand_int(0, k > 1 ? 1 : 0);
    int64_t hout, wout;
    Shape wshape;
    if (op == "Conv2D") {
      if (h + 2 * p < k || w + 2 * p < k) return false;
      hout = (h + 2 * p - k) / s + 1;
      wout = (w + 2 * p - k) / s + 1;
      wshape = {cout, cin, k, k};
    } else {
      hout = (h - 1) * s - 2 * p + k;
      wout = (w - 1) * s - 2 * p + k;
      wshape = {cin, cout, k, k};
    }
    if (hout < 1 || wout < 1) return false;
    Shape out = {a->shape[0], cout, hout, wout};
    if (numel(out) > kMaxElements) return false;
    const std::string weights = st.add_const(DType::Float32, wshape);
    st.emit(op, {a->name, weights}, {{"stride", s}, {"pad", p}},
            {st.next_value(), DType::Float32, out});
    return true;
  }

  if (op == "DepthToSpace") {
    const TensorSpec* a = st.pick([](const TensorSpec& s) {
      return s.shape.size() == 4 && s.shape[1] % 4 == 0 &&
             numel(s.shape) <= kMaxElements;
    });
    int64_t block = 2;
    if (!a) {
      a = st.pick([](const TensorSpec& s) { return s.shape.size() == 4; });
      block = 1;
    }
    if (!a) return false;
    Shape out = {a->shape[0], a->shape[1] / (block * block), a->shape[2] * block,
                 a->shape[3] * block};
    st.emit(op, {a->name}, {{"blocksize", block}}, {st.next_value(), a->dtype, out});
    return true;
  }

  if (op == "Cast") {
    const TensorSpec* a = st.pick([](const TensorSpec& s) {
      return s.dtype == DType::Float32 || s.dtype == DType::Int64;
    });
    if (!a) return false;
    const DType to = a->dtype == DType::Float32 ? DType::Int64 : DType::Float32;
    st.emit(op, {a->name}, {{"to", std::string(dtype_name(to))}},
            {st.next_value(), to, a->shape});
    return true;
  }

  return false;
}

}  // namespace

Graph gen_random_graph(uint64_t seed, const GenParams& params) {
  GenState st;
  st.rng.seed(seed);
  st.g.name = "gen_" + std::to_string(seed);

  TensorSpec input;
  input.name = "in0";
  input.dtype = DType::Float32;
  input.shape = {1, st.rand_int(1, 3), st.rand_int(4, 8), st.rand_int(4, 8)};
  st.g.inputs.push_back(input);
  st.pool.push_back(input);

  std::vector<std::string> ops =
      params.allowed_ops.empty() ? op_vocabulary() : params.allowed_ops;

  std::vector<std::string> plan = params.must_include;
  while (static_cast<int>(plan.size()) < params.node_count)
    plan.push_back(ops[static_cast<size_t>(
        st.rand_int(0, static_cast<int64_t>(ops.size()) - 1))]);

  for (size_t step = 0; step < plan.size(); ++step) {
    // Planted Subs always take a constant operand; random ones only when
    // the params say so.
    const bool planted = step < params.must_include.size();
    bool emitted = try_emit(st, plan[step], params.const_sub_only || planted);
    for (int attempt = 0; !emitted && attempt < 8; ++attempt)
      emitted = try_emit(st,
                         ops[static_cast<size_t>(
                             st.rand_int(0, static_cast<int64_t>(ops.size()) - 1))],
                         params.const_sub_only);
    if (!emitted) {
      const TensorSpec* a = st.pick(any_f32);
      if (a) st.emit("Relu", {a->name}, {}, {st.next_value(), DType::Float32, a->shape});
    }
  }

  for (const auto& spec : st.pool)
    if (!st.consumed.count(spec.name)) st.g.outputs.push_back(spec.name);
  if (st.g.outputs.empty()) st.g.outputs.push_back(st.pool.back().name);

  validate(st.g);
  return st.g;
}

}  // namespace retarget
