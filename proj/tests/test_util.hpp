// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>
#include <vector>

#include "retarget/interpreter.hpp"
#include "retarget/ir.hpp"

namespace retarget::testing {

inline std::string fixture_path(const std::string& name) {
  return std::string(FIXTURE_DIR) + "/" + name;
}

inline std::vector<float> random_floats(size_t n, uint64_t seed, double lo = -1.0,
                                        double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<float> out(n);
  for (auto& v : out) v = static_cast<float>(dist(rng));
  return out;
}

inline Initializer f32_init(const std::string& name, Shape shape,
                            std::vector<float> data) {
  return Initializer{{name, DType::Float32, std::move(shape)}, std::move(data)};
}

inline Initializer random_init(const std::string& name, Shape shape, uint64_t seed) {
  auto data = random_floats(static_cast<size_t>(numel(shape)), seed);
  return f32_init(name, std::move(shape), std::move(data));
}

// Single ConvTranspose2D node: input [1, cin, sp, sp], weights
// [cin, cout, k, k] random from `seed`.
inline Graph single_deconv_graph(int64_t cin, int64_t cout, int64_t sp, int64_t k,
                                 int64_t stride, int64_t pad, uint64_t seed) {
  Graph g;
  g.name = "deconv_case";
  g.inputs.push_back({"x", DType::Float32, {1, cin, sp, sp}});
  g.initializers.push_back(random_init("w", {cin, cout, k, k}, seed));
  g.nodes.push_back(Node{"deconv0",
                         "ConvTranspose2D",
                         {"x", "w"},
                         {"y"},
                         {{"stride", stride}, {"pad", pad}}});
  g.outputs = {"y"};
  validate(g);
  return g;
}

inline Graph single_conv_graph(int64_t cin, int64_t cout, int64_t h, int64_t w,
                               int64_t k, int64_t stride, int64_t pad, uint64_t seed) {
  Graph g;
  g.name = "conv_case";
  g.inputs.push_back({"x", DType::Float32, {1, cin, h, w}});
  g.initializers.push_back(random_init("w", {cout, cin, k, k}, seed));
  g.nodes.push_back(
      Node{"conv0", "Conv2D", {"x", "w"}, {"y"}, {{"stride", stride}, {"pad", pad}}});
  g.outputs = {"y"};
  validate(g);
  return g;
}

inline double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]));
  return worst;
}

}  // namespace retarget::testing
