// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0

#include "retarget/profiles.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace retarget {

using nlohmann::json;

bool supports(const CapabilityProfile& p, const Node& n) {
  return p.supported_ops.count(n.op_type) > 0;
}

namespace {

void validate_profile(const CapabilityProfile& p) {
  if (p.name.empty()) throw ValidationError("profile: missing or empty name");
  if (p.supported_ops.empty())
    throw ValidationError("profile '" + p.name + "': supported_ops must be non-empty");
  for (const auto& op : p.supported_ops) {
    if (is_vocabulary_op(op) || is_custom_op(op)) continue;
    throw ValidationError("profile '" + p.name + "': unknown op '" + op +
                          "' (did you mean '" + nearest_vocabulary_op(op) + "'?)");
  }
  if (p.max_input_pixels && *p.max_input_pixels < 1)
    throw ValidationError("profile '" + p.name + "': max_input_pixels must be positive");
}

}  // namespace

CapabilityProfile parse_profile(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("profile text is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ParseError("profile must be a JSON object");

  for (auto it = root.begin(); it != root.end(); ++it) {
    static const std::set<std::string> known = {
        "name",          "description",        "hardware_targets",
        "supported_ops", "single_output_only", "max_input_pixels"};
    if (!known.count(it.key()))
      throw ParseError("profile: unknown field '" + it.key() + "'");
  }
  for (const char* field : {"name", "description", "hardware_targets", "supported_ops",
                            "single_output_only", "max_input_pixels"})
    if (!root.contains(field))
      throw ParseError(std::string("profile: missing field '") + field + "'");

  CapabilityProfile p;
  p.name = root.at("name").get<std::string>();
  p.description = root.at("description").get<std::string>();
  for (const auto& hw : root.at("hardware_targets"))
    p.hardware_targets.push_back(hw.get<std::string>());
  for (const auto& op : root.at("supported_ops"))
    p.supported_ops.insert(op.get<std::string>());
  p.single_output_only = root.at("single_output_only").get<bool>();
  const json& cap = root.at("max_input_pixels");
  if (!cap.is_null()) p.max_input_pixels = cap.get<int64_t>();

  validate_profile(p);
  return p;
}

std::string serialize_profile(const CapabilityProfile& p) {
  json root;
  root["name"] = p.name;
  root["description"] = p.description;
  root["hardware_targets"] = p.hardware_targets;
  root["supported_ops"] = p.supported_ops;
  root["single_output_only"] = p.single_output_only;
  if (p.max_input_pixels)
    root["max_input_pixels"] = *p.max_input_pixels;
  else
    root["max_input_pixels"] = nullptr;
  return root.dump(2) + "\n";
}

CapabilityProfile load_profile_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open profile file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_profile(buf.str());
}

const std::vector<CapabilityProfile>& builtin_profiles() {
  static const std::vector<CapabilityProfile> profiles = [] {
    std::set<std::string> all(op_vocabulary().begin(), op_vocabulary().end());

    CapabilityProfile tnn;
    tnn.name = "tnn";
    tnn.description =
        "Tencent TNN mobile inference: Cast and Dropout are unsupported and "
        "deployed models expose a single output node.";
    tnn.hardware_targets = {"CPU-x86", "CPU-Arm", "GPU-OpenCL", "NPU"};
    tnn.supported_ops = all;
    tnn.supported_ops.erase("Cast");
    tnn.supported_ops.erase("Dropout");
    tnn.single_output_only = true;

    CapabilityProfile strict;
    strict.name = "mobile-strict";
    strict.description =
        "Illustrative synthetic mobile target (not a real framework): no "
        "ConvTranspose2D, Sub, Softmax or Neg, so it exercises substitution, "
        "structural rewrite and tail-split end to end.";
    strict.hardware_targets = {"CPU-Arm", "GPU-OpenCL"};
    strict.supported_ops = all;
    strict.supported_ops.erase("ConvTranspose2D");
    strict.supported_ops.erase("Sub");
    strict.supported_ops.erase("Softmax");
    strict.supported_ops.erase("Neg");

    CapabilityProfile full;
    full.name = "full";
    full.description =
        "Illustrative reference target supporting the whole op vocabulary.";
    full.hardware_targets = {"CPU-x86", "CPU-Arm", "GPU-CUDA", "GPU-OpenCL"};
    full.supported_ops = all;

    return std::vector<CapabilityProfile>{tnn, strict, full};
  }();
  return profiles;
}

CapabilityProfile resolve_profile(const std::string& name_or_path) {
  for (const auto& p : builtin_profiles())
    if (p.name == name_or_path) return p;

  namespace fs = std::filesystem;
  if (fs::exists(name_or_path)) return load_profile_file(name_or_path);

  if (const char* env = std::getenv("RETARGET_PROFILE_PATH")) {
    std::stringstream dirs(env);
    std::string dir;
    while (std::getline(dirs, dir, ':')) {
      if (dir.empty()) continue;
      fs::path candidate = fs::path(dir) / (name_or_path + ".profile.json");
      if (fs::exists(candidate)) return load_profile_file(candidate.string());
    }
  }
  throw UsageError("unknown profile '" + name_or_path +
                   "' (not a builtin, file, or RETARGET_PROFILE_PATH entry)");
}

}  // namespace retarget
