// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0
//
// retarget: analyze, convert, run and diff computation graphs against
// deployment capability profiles.
//
// Exit codes: 0 success, 1 incompatible graph or failed equivalence check,
// 2 usage or I/O error, 3 internal error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "retarget/analyzer.hpp"
#include "retarget/harness.hpp"
#include "retarget/interpreter.hpp"
#include "retarget/ir.hpp"
#include "retarget/profiles.hpp"
#include "retarget/rewriter.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace retarget;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIncompatible = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInternal = 3;

struct PreferSpec {
  AnalyzeOptions options;
};

// --prefer accepts either "node_id=S3" (repeatable, per node) or a comma
// list like "S3,S1,S2,S4" that reorders the classification priority.
void apply_prefer(AnalyzeOptions& opts, const std::vector<std::string>& prefs) {
  for (const auto& pref : prefs) {
    auto eq = pref.find('=');
    if (eq != std::string::npos) {
      const std::string node = pref.substr(0, eq);
      auto scenario = scenario_from_name(pref.substr(eq + 1));
      if (node.empty() || !scenario)
        throw UsageError("bad --prefer '" + pref + "' (expected node_id=S1..S4)");
      opts.prefer[node] = *scenario;
      continue;
    }
    std::vector<Scenario> order;
    std::stringstream ss(pref);
    std::string token;
    while (std::getline(ss, token, ',')) {
      auto scenario = scenario_from_name(token);
      if (!scenario)
        throw UsageError("bad --prefer scenario '" + token + "' in '" + pref + "'");
      order.push_back(*scenario);
    }
    if (order.empty()) throw UsageError("empty --prefer value");
    for (Scenario s : {Scenario::S1_Substitute, Scenario::S3_TailSplit,
                       Scenario::S2_RetrainRewrite, Scenario::S4_CustomOp})
      if (std::find(order.begin(), order.end(), s) == order.end()) order.push_back(s);
    opts.priority = order;
  }
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file '" + path + "'");
  out << content;
}

void print_report_table(const CompatibilityReport& report, const Graph& g) {
  std::cout << "model '" << g.name << "' vs profile '" << report.profile_name << "'\n";
  if (report.unsupported.empty()) {
    std::cout << "  all " << g.nodes.size() << " nodes supported\n";
  } else {
    std::cout << "  " << std::left << std::setw(14) << "node" << std::setw(18) << "op"
              << std::setw(20) << "scenario" << std::setw(34) << "rule"
              << "rationale\n";
    std::map<std::string, std::string> op_by_id;
    for (const auto& n : g.nodes) op_by_id[n.id] = n.op_type;
    for (const auto& a : report.unsupported)
      std::cout << "  " << std::left << std::setw(14) << a.node_id << std::setw(18)
                << op_by_id[a.node_id] << std::setw(20) << scenario_name(a.scenario)
                << std::setw(34) << (a.rule_id ? *a.rule_id : "-") << a.rationale
                << "\n";
  }
  for (const auto& v : report.structural_violations)
    std::cout << "  structural violation: " << v << "\n";
  std::cout << "  deployable as-is: " << (report.deployable_as_is ? "yes" : "no")
            << "\n";
}

json bench_to_json(const BenchReport& b) {
  json j;
  j["wall_latency_ms"] = b.wall_latency_ms;
  j["throughput_per_s"] = b.throughput_per_s;
  j["multiply_accumulate_count"] = b.multiply_accumulate_count;
  j["peak_live_tensor_bytes"] = b.peak_live_tensor_bytes;
  return j;
}

void print_diff_table(const DiffReport& d) {
  std::cout << "diff over " << d.trials << " trials (seed " << d.seed << ", tolerance "
            << d.tolerance << ")\n";
  for (const auto& o : d.outputs) {
    std::cout << "  " << std::left << std::setw(20) << o.name
              << " max_abs_diff=" << std::setprecision(9) << o.max_abs_diff;
    if (o.shape_a != o.shape_b) std::cout << "  SHAPE MISMATCH";
    std::cout << "\n";
  }
  std::cout << "  worst=" << d.worst_abs_diff << "  " << (d.pass ? "PASS" : "FAIL")
            << "\n";
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_analyze(const std::string& model_path, const std::string& profile_name,
                double tail_fraction, const std::vector<std::string>& prefs,
                const std::string& out_path, bool as_json) {
  const Graph g = load_model_file(model_path);
  const CapabilityProfile profile = resolve_profile(profile_name);
  AnalyzeOptions opts;
  opts.tail_fraction = tail_fraction;
  apply_prefer(opts, prefs);

  const CompatibilityReport report = analyze(g, profile, builtin_rules(), opts);
  const std::string rendered = report_to_json(report);
  if (as_json)
    std::cout << rendered;
  else
    print_report_table(report, g);
  if (!out_path.empty()) write_text_file(out_path, rendered);
  return report.deployable_as_is ? kExitOk : kExitIncompatible;
}

int cmd_convert(const std::string& model_path, const std::string& profile_name,
                const std::string& out_dir, const std::string& mode, bool verify,
                int trials, double tol, uint64_t seed, double tail_fraction,
                const std::vector<std::string>& prefs, bool as_json) {
  const Graph g = load_model_file(model_path);
  const CapabilityProfile profile = resolve_profile(profile_name);

  ConvertOptions opts;
  opts.analyze.tail_fraction = tail_fraction;
  apply_prefer(opts.analyze, prefs);
  if (mode == "exact")
    opts.deconv = DeconvPolicy::ExactOnly;
  else if (mode == "structural")
    opts.deconv = DeconvPolicy::StructuralOnly;

  const ConversionResult result = convert(g, profile, builtin_rules(), opts);

  fs::create_directories(out_dir);
  const std::string stem = fs::path(model_path).filename().string().substr(
      0, fs::path(model_path).filename().string().find('.'));
  const fs::path prefix_path = fs::path(out_dir) / (stem + ".nng.json");
  const fs::path post_path = fs::path(out_dir) / (stem + ".post.nng.json");
  const fs::path manifest_path = fs::path(out_dir) / (stem + ".manifest.json");

  save_model_file(result.converted, prefix_path.string());
  std::vector<std::string> written = {prefix_path.string()};
  if (result.split) {
    save_model_file(result.split->postprocess, post_path.string());
    written.push_back(post_path.string());
  }
  write_text_file(manifest_path.string(), conversion_manifest_to_json(result));
  written.push_back(manifest_path.string());

  bool verified = true;
  std::optional<DiffReport> diff;
  if (verify) {
    if (result.split)
      diff = diff_split(g, *result.split, trials, tol, seed);
    else
      diff = diff_graphs(g, result.converted, trials, tol, seed);
    verified = diff->pass;
  }

  if (as_json) {
    json j;
    j["files"] = written;
    j["applied_rules"] = json::parse(conversion_manifest_to_json(result))["applied_rules"];
    j["retraining_required"] = result.retraining_required;
    j["residual_deployable"] = result.residual.deployable_as_is;
    if (diff) j["verify"] = json::parse(diff_report_to_json(*diff));
    std::cout << j.dump(2) << "\n";
  } else {
    for (const auto& f : written) std::cout << "wrote " << f << "\n";
    if (result.retraining_required)
      std::cout << "note: retraining-required rewrites were applied; numeric "
                   "equivalence with the original is not expected\n";
    for (const auto& r : result.applied_rules)
      std::cout << "  applied " << r.rule_id << " at node '" << r.node_id << "'"
                << (r.retraining_required ? " (retraining required)" : "") << "\n";
    for (const auto& m : result.custom_manifests)
      std::cout << "  custom op '" << m.op_type << "' must be implemented in: "
                << m.required_in[0] << ", " << m.required_in[1] << "\n";
    if (diff) print_diff_table(*diff);
  }
  return result.residual.deployable_as_is && verified ? kExitOk : kExitIncompatible;
}

int cmd_run(const std::string& model_path, const std::string& inputs_path,
            const std::string& out_path, int bench_reps, bool as_json) {
  const Graph g = load_model_file(model_path);
  const TensorMap inputs =
      inputs_path.empty() ? TensorMap{} : load_tensors_file(inputs_path);

  const TensorMap outputs = run_graph(g, inputs);
  std::optional<BenchReport> report;
  if (bench_reps > 0) report = bench(g, inputs, bench_reps);

  const std::string rendered = serialize_tensors(outputs);
  if (!out_path.empty()) write_text_file(out_path, rendered);

  if (as_json) {
    json j;
    j["outputs"] = json::parse(rendered);
    if (report) j["bench"] = bench_to_json(*report);
    std::cout << j.dump(2) << "\n";
  } else {
    if (out_path.empty()) std::cout << rendered;
    if (report) {
      std::cout << "bench: " << report->wall_latency_ms.size() << " runs, throughput "
                << report->throughput_per_s << " inf/s, MACs "
                << report->multiply_accumulate_count << ", peak live bytes "
                << report->peak_live_tensor_bytes << "\n";
      std::cout << "latency_ms:";
      for (double ms : report->wall_latency_ms) std::cout << " " << ms;
      std::cout << "\n";
    }
  }
  return kExitOk;
}

int cmd_diff(const std::string& path_a, const std::string& path_b, int trials,
             double tol, uint64_t seed, bool as_json) {
  const Graph a = load_model_file(path_a);
  const Graph b = load_model_file(path_b);
  const DiffReport report = diff_graphs(a, b, trials, tol, seed);
  if (as_json)
    std::cout << diff_report_to_json(report);
  else
    print_diff_table(report);
  return report.pass ? kExitOk : kExitIncompatible;
}

std::vector<CapabilityProfile> discoverable_profiles() {
  std::vector<CapabilityProfile> all = builtin_profiles();
  if (const char* env = std::getenv("RETARGET_PROFILE_PATH")) {
    std::stringstream dirs(env);
    std::string dir;
    while (std::getline(dirs, dir, ':')) {
      if (dir.empty() || !fs::is_directory(dir)) continue;
      for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > 13 && name.substr(name.size() - 13) == ".profile.json")
          all.push_back(load_profile_file(entry.path().string()));
      }
    }
  }
  return all;
}

int cmd_profiles(const std::string& action, const std::string& name, bool as_json) {
  if (action == "list") {
    if (as_json) {
      json j = json::array();
      for (const auto& p : discoverable_profiles()) j.push_back(p.name);
      std::cout << j.dump(2) << "\n";
    } else {
      for (const auto& p : discoverable_profiles())
        std::cout << std::left << std::setw(16) << p.name << p.description << "\n";
    }
    return kExitOk;
  }
  const CapabilityProfile p = resolve_profile(name);
  if (as_json) {
    std::cout << serialize_profile(p);
  } else {
    std::cout << p.name << ": " << p.description << "\n";
    std::cout << "  hardware:";
    for (const auto& hw : p.hardware_targets) std::cout << " " << hw;
    std::cout << "\n  single_output_only: " << (p.single_output_only ? "yes" : "no")
              << "\n  max_input_pixels: "
              << (p.max_input_pixels ? std::to_string(*p.max_input_pixels) : "none")
              << "\n  supported_ops:";
    for (const auto& op : p.supported_ops) std::cout << " " << op;
    std::cout << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"retarget: capability analysis and conversion for computation graphs"};
  app.require_subcommand(1);

  // analyze
  std::string an_model, an_profile, an_out;
  double an_tail = 0.25;
  std::vector<std::string> an_prefer;
  bool an_json = false;
  auto* analyze_cmd = app.add_subcommand("analyze", "classify unsupported nodes");
  analyze_cmd->add_option("model", an_model, "model file (.nng.json)")->required();
  analyze_cmd->add_option("--profile", an_profile, "profile name or path")->required();
  analyze_cmd->add_option("--tail-fraction", an_tail, "tail-eligibility threshold");
  analyze_cmd->add_option("--prefer", an_prefer,
                          "node_id=S1..S4 or a scenario priority list");
  analyze_cmd->add_option("--out", an_out, "write the JSON report here");
  analyze_cmd->add_flag("--json", an_json, "machine-readable output");

  // convert
  std::string cv_model, cv_profile, cv_outdir, cv_mode = "auto";
  bool cv_verify = false, cv_json = false;
  int cv_trials = 20;
  double cv_tol = 1e-6, cv_tail = 0.25;
  uint64_t cv_seed = 0;
  std::vector<std::string> cv_prefer;
  auto* convert_cmd = app.add_subcommand("convert", "apply scenario transformations");
  convert_cmd->add_option("model", cv_model, "model file")->required();
  convert_cmd->add_option("--profile", cv_profile, "profile name or path")->required();
  convert_cmd->add_option("--out-dir", cv_outdir, "output directory")->required();
  convert_cmd->add_option("--mode", cv_mode, "deconv rewrite mode")
      ->check(CLI::IsMember({"auto", "exact", "structural"}));
  convert_cmd->add_flag("--verify", cv_verify, "diff the result against the original");
  convert_cmd->add_option("--trials", cv_trials, "verification trials");
  convert_cmd->add_option("--tol", cv_tol, "verification tolerance");
  convert_cmd->add_option("--seed", cv_seed, "verification seed");
  convert_cmd->add_option("--tail-fraction", cv_tail, "tail-eligibility threshold");
  convert_cmd->add_option("--prefer", cv_prefer,
                          "node_id=S1..S4 or a scenario priority list");
  convert_cmd->add_flag("--json", cv_json, "machine-readable output");

  // run
  std::string rn_model, rn_inputs, rn_out;
  int rn_bench = 0;
  bool rn_json = false;
  auto* run_cmd = app.add_subcommand("run", "execute with the reference interpreter");
  run_cmd->add_option("model", rn_model, "model file")->required();
  run_cmd->add_option("--inputs", rn_inputs, "input tensors file (.tensors.json)");
  run_cmd->add_option("--out", rn_out, "write output tensors here");
  run_cmd->add_option("--bench", rn_bench, "repetitions for the bench report");
  run_cmd->add_flag("--json", rn_json, "machine-readable output");

  // diff
  std::string df_a, df_b;
  int df_trials = 20;
  double df_tol = 1e-6;
  uint64_t df_seed = 0;
  bool df_json = false;
  auto* diff_cmd = app.add_subcommand("diff", "numeric equivalence of two models");
  diff_cmd->add_option("model_a", df_a, "first model")->required();
  diff_cmd->add_option("model_b", df_b, "second model")->required();
  diff_cmd->add_option("--trials", df_trials, "number of random input sets");
  diff_cmd->add_option("--tol", df_tol, "max abs tolerance");
  diff_cmd->add_option("--seed", df_seed, "input generator seed");
  diff_cmd->add_flag("--json", df_json, "machine-readable output");

  // profiles
  std::string pf_action, pf_name;
  bool pf_json = false;
  auto* profiles_cmd = app.add_subcommand("profiles", "list or show profiles");
  profiles_cmd->add_option("action", pf_action, "list | show")
      ->required()
      ->check(CLI::IsMember({"list", "show"}));
  profiles_cmd->add_option("name", pf_name, "profile name (for show)");
  profiles_cmd->add_flag("--json", pf_json, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (analyze_cmd->parsed())
      return cmd_analyze(an_model, an_profile, an_tail, an_prefer, an_out, an_json);
    if (convert_cmd->parsed())
      return cmd_convert(cv_model, cv_profile, cv_outdir, cv_mode, cv_verify, cv_trials,
                         cv_tol, cv_seed, cv_tail, cv_prefer, cv_json);
    if (run_cmd->parsed()) return cmd_run(rn_model, rn_inputs, rn_out, rn_bench, rn_json);
    if (diff_cmd->parsed()) return cmd_diff(df_a, df_b, df_trials, df_tol, df_seed, df_json);
    if (profiles_cmd->parsed()) {
      if (pf_action == "show" && pf_name.empty())
        throw UsageError("profiles show needs a profile name");
      return cmd_profiles(pf_action, pf_name, pf_json);
    }
  } catch (const InternalError& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
