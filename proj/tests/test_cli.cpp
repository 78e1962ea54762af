// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "retarget/interpreter.hpp"
#include "retarget/ir.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace retarget;
using namespace retarget::testing;

namespace {

struct CmdResult {
  int exit_code;
  std::string output;  // stdout + stderr
};

CmdResult run_cli(const std::string& args) {
  const std::string cmd = std::string(RETARGET_BIN) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  std::string output;
  char buf[4096];
  while (size_t n = fread(buf, 1, sizeof(buf), pipe)) output.append(buf, n);
  const int status = pclose(pipe);
  return {WEXITSTATUS(status), output};
}

std::string tmp_dir() {
  const fs::path dir = fs::temp_directory_path() / "retarget_cli_test";
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("cli analyze: incompatible graph exits 1 and shows the S1 row") {
  auto r = run_cli("analyze " + fixture_path("sub_const.nng.json") +
                   " --profile mobile-strict");
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("sub_const_to_add") != std::string::npos);
  CHECK(r.output.find("S1_substitute") != std::string::npos);
}

TEST_CASE("cli analyze: supported graph exits 0") {
  auto r = run_cli("analyze " + fixture_path("identity.nng.json") + " --profile full");
  CHECK(r.exit_code == 0);
}

TEST_CASE("cli analyze: missing file exits 2") {
  auto r = run_cli("analyze /no/such/model.nng.json --profile full");
  CHECK(r.exit_code == 2);
}

TEST_CASE("cli analyze: --out writes the JSON report") {
  const std::string out = tmp_dir() + "/report.json";
  fs::remove(out);
  auto r = run_cli("analyze " + fixture_path("sub_const.nng.json") +
                   " --profile mobile-strict --out " + out);
  CHECK(r.exit_code == 1);
  std::ifstream in(out);
  REQUIRE(in.good());
  json parsed = json::parse(in);
  CHECK(parsed["deployable_as_is"] == false);
}

TEST_CASE("cli convert: composite with --verify writes three files and exits 0") {
  const std::string dir = tmp_dir() + "/composite";
  fs::remove_all(dir);
  auto r = run_cli("convert " + fixture_path("composite.nng.json") +
                   " --profile mobile-strict --out-dir " + dir + " --verify");
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(dir + "/composite.nng.json"));
  CHECK(fs::exists(dir + "/composite.post.nng.json"));
  CHECK(fs::exists(dir + "/composite.manifest.json"));
}

TEST_CASE("cli convert: custom-op-only graph exits 1 with a manifest") {
  const std::string dir = tmp_dir() + "/custom";
  fs::remove_all(dir);
  auto r = run_cli("convert " + fixture_path("custom_op.nng.json") +
                   " --profile tnn --out-dir " + dir);
  CHECK(r.exit_code == 1);
  std::ifstream in(dir + "/custom_op.manifest.json");
  REQUIRE(in.good());
  json manifest = json::parse(in);
  REQUIRE(manifest["custom_ops"].size() == 1);
  CHECK(manifest["custom_ops"][0]["op_type"] == "Custom:warp");
  CHECK(manifest["custom_ops"][0]["occurrences"].size() == 2);
}

TEST_CASE("cli convert: --mode exact refuses overlapping deconvs with exit 2") {
  const std::string dir = tmp_dir() + "/exact_refuse";
  auto r = run_cli("convert " + fixture_path("deconv_structural.nng.json") +
                   " --profile mobile-strict --out-dir " + dir + " --mode exact");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("non-overlapping") != std::string::npos);
}

TEST_CASE("cli run: identity copies its input") {
  const std::string out = tmp_dir() + "/id_out.tensors.json";
  fs::remove(out);
  auto r = run_cli("run " + fixture_path("identity.nng.json") + " --inputs " +
                   fixture_path("identity.tensors.json") + " --out " + out);
  CHECK(r.exit_code == 0);
  TensorMap outputs = load_tensors_file(out);
  CHECK(outputs.at("x").floats() == std::vector<float>{0.25f, -1.5f});
}

TEST_CASE("cli run: bench reports samples, throughput and MACs") {
  auto r = run_cli("run " + fixture_path("conv_bench.nng.json") + " --inputs " +
                   fixture_path("conv_bench.tensors.json") + " --bench 10 --json");
  CHECK(r.exit_code == 0);
  json parsed = json::parse(r.output);
  CHECK(parsed["bench"]["wall_latency_ms"].size() == 10);
  CHECK(parsed["bench"]["throughput_per_s"].get<double>() > 0.0);
  CHECK(parsed["bench"]["multiply_accumulate_count"] == 36);
}

TEST_CASE("cli diff: same file passes, perturbed weights fail") {
  auto same = run_cli("diff " + fixture_path("sub_const.nng.json") + " " +
                      fixture_path("sub_const.nng.json"));
  CHECK(same.exit_code == 0);

  // perturb one weight
  Graph g = load_model_file(fixture_path("sub_const.nng.json"));
  for (auto& init : g.initializers)
    if (init.spec.name == "shift") std::get<std::vector<float>>(init.data)[0] += 0.5f;
  const std::string perturbed = tmp_dir() + "/sub_const_perturbed.nng.json";
  save_model_file(g, perturbed);

  auto diff = run_cli("diff " + fixture_path("sub_const.nng.json") + " " + perturbed);
  CHECK(diff.exit_code == 1);
}

TEST_CASE("cli diff: rewritten model matches the original") {
  const std::string dir = tmp_dir() + "/sub_const_conv";
  fs::remove_all(dir);
  REQUIRE(run_cli("convert " + fixture_path("sub_const.nng.json") +
                  " --profile mobile-strict --out-dir " + dir)
              .exit_code == 0);
  auto r = run_cli("diff " + fixture_path("sub_const.nng.json") + " " + dir +
                   "/sub_const.nng.json --trials 20 --tol 1e-6");
  CHECK(r.exit_code == 0);
}

TEST_CASE("cli profiles: list and show") {
  auto list = run_cli("profiles list");
  CHECK(list.exit_code == 0);
  for (const char* name : {"tnn", "mobile-strict", "full"})
    CHECK(list.output.find(name) != std::string::npos);

  auto show = run_cli("profiles show tnn --json");
  CHECK(show.exit_code == 0);
  json parsed = json::parse(show.output);
  const auto& ops = parsed["supported_ops"];
  CHECK(std::find(ops.begin(), ops.end(), "Cast") == ops.end());
  CHECK(std::find(ops.begin(), ops.end(), "Dropout") == ops.end());
  CHECK(std::find(ops.begin(), ops.end(), "Conv2D") != ops.end());

  auto unknown = run_cli("profiles show nope");
  CHECK(unknown.exit_code == 2);
}

TEST_CASE("cli: bad usage exits 2") {
  CHECK(run_cli("analyze").exit_code == 2);
  CHECK(run_cli("frobnicate x").exit_code == 2);
  CHECK(run_cli("convert " + fixture_path("sub_const.nng.json") +
                " --profile mobile-strict --out-dir /tmp/x --mode bogus")
            .exit_code == 2);
}

TEST_CASE("cli: commands do not mutate their input files") {
  const std::string path = fixture_path("sub_const.nng.json");
  std::ifstream before_f(path, std::ios::binary);
  std::string before((std::istreambuf_iterator<char>(before_f)),
                     std::istreambuf_iterator<char>());
  run_cli("analyze " + path + " --profile mobile-strict");
  run_cli("convert " + path + " --profile mobile-strict --out-dir " + tmp_dir() +
          "/noclobber");
  std::ifstream after_f(path, std::ios::binary);
  std::string after((std::istreambuf_iterator<char>(after_f)),
                    std::istreambuf_iterator<char>());
  CHECK(before == after);
}
