// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdlib>

#include "retarget/profiles.hpp"
#include "test_util.hpp"

using namespace retarget;

namespace {

const CapabilityProfile& builtin(const std::string& name) {
  for (const auto& p : builtin_profiles())
    if (p.name == name) return p;
  REQUIRE(false);
  throw std::logic_error("unreachable");
}

std::string shipped(const std::string& file) {
  return std::string(SHIPPED_PROFILE_DIR) + "/" + file;
}

}  // namespace

TEST_CASE("tnn profile: Cast and Dropout are unsupported") {
  const CapabilityProfile& tnn = builtin("tnn");
  CHECK_FALSE(tnn.supported_ops.count("Cast"));
  CHECK_FALSE(tnn.supported_ops.count("Dropout"));
  CHECK(tnn.single_output_only);

  Node cast{"c0", "Cast", {"x"}, {"y"}, {{"to", std::string("int64")}}};
  Node conv{"c1", "Conv2D", {"x", "w"}, {"y2"}, {}};
  CHECK_FALSE(supports(tnn, cast));
  CHECK(supports(tnn, conv));
}

TEST_CASE("supports depends only on the op type") {
  for (const auto& p : builtin_profiles())
    for (const auto& op : p.supported_ops) {
      Node n{"n0", op, {}, {"y"}, {}};
      CHECK(supports(p, n));
    }
}

TEST_CASE("shipped profile files equal the builtins") {
  CHECK(load_profile_file(shipped("tnn.profile.json")) == builtin("tnn"));
  CHECK(load_profile_file(shipped("mobile-strict.profile.json")) ==
        builtin("mobile-strict"));
  CHECK(load_profile_file(shipped("full.profile.json")) == builtin("full"));
}

TEST_CASE("loading the same file twice yields equal profiles") {
  auto a = load_profile_file(shipped("tnn.profile.json"));
  auto b = load_profile_file(shipped("tnn.profile.json"));
  CHECK(a == b);
}

TEST_CASE("profile round-trips through serialization") {
  for (const auto& p : builtin_profiles())
    CHECK(parse_profile(serialize_profile(p)) == p);
}

TEST_CASE("unknown op name suggests the nearest vocabulary member") {
  const char* text = R"({
    "name": "typo", "description": "", "hardware_targets": [],
    "supported_ops": ["Sofmax"], "single_output_only": false,
    "max_input_pixels": null
  })";
  CHECK_THROWS_WITH_AS(parse_profile(text), doctest::Contains("Softmax"),
                       ValidationError);
}

TEST_CASE("empty supported_ops is invalid") {
  const char* text = R"({
    "name": "empty", "description": "", "hardware_targets": [],
    "supported_ops": [], "single_output_only": false, "max_input_pixels": null
  })";
  CHECK_THROWS_AS(parse_profile(text), ValidationError);
}

TEST_CASE("missing fields are reported") {
  CHECK_THROWS_WITH_AS(parse_profile(R"({"name": "x"})"), doctest::Contains("missing"),
                       ParseError);
}

TEST_CASE("custom op entries are allowed in supported_ops") {
  const char* text = R"({
    "name": "custom", "description": "", "hardware_targets": [],
    "supported_ops": ["Relu", "Custom:warp"], "single_output_only": false,
    "max_input_pixels": 65536
  })";
  CapabilityProfile p = parse_profile(text);
  Node warp{"w0", "Custom:warp", {"x"}, {"y"}, {}};
  CHECK(supports(p, warp));
  CHECK(p.max_input_pixels == 65536);
}

TEST_CASE("resolve_profile: builtin, path, search dirs, unknown") {
  CHECK(resolve_profile("tnn") == builtin("tnn"));
  CHECK(resolve_profile(shipped("full.profile.json")) == builtin("full"));

  setenv("RETARGET_PROFILE_PATH", SHIPPED_PROFILE_DIR, 1);
  CHECK(resolve_profile("mobile-strict") == builtin("mobile-strict"));
  unsetenv("RETARGET_PROFILE_PATH");

  CHECK_THROWS_AS(resolve_profile("no-such-profile"), UsageError);
}
