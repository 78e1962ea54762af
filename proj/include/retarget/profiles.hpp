// Copyright (c) 2026 The Retarget Authors
// SPDX-License-Identifier: Apache-2.0
//
// Declarative capability profiles: which ops and structural constraints a
// deployment framework supports. Profiles are pure data, immutable after
// load.

#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "retarget/ir.hpp"

namespace retarget {

struct CapabilityProfile {
  std::string name;
  std::string description;
  std::vector<std::string> hardware_targets;  // informational only
  std::set<std::string> supported_ops;
  bool single_output_only = false;
  std::optional<int64_t> max_input_pixels;  // cap on H*W of rank-4 inputs

  bool operator==(const CapabilityProfile&) const = default;
};

/// True iff the node's op type is in the profile's supported set. Structural
/// constraints (output count, resolution) are the analyzer's business.
bool supports(const CapabilityProfile& p, const Node& n);

/// Parses and validates a .profile.json file: fields name, description,
/// hardware_targets, supported_ops, single_output_only, max_input_pixels
/// (null allowed). Unknown op names are rejected with a nearest-vocabulary
/// suggestion.
CapabilityProfile parse_profile(std::string_view text);
std::string serialize_profile(const CapabilityProfile& p);
CapabilityProfile load_profile_file(const std::string& path);

/// Compiled-in profiles: "tnn" (no Cast/Dropout, single output only),
/// "mobile-strict" (a synthetic mobile target with no ConvTranspose2D, Sub,
/// Softmax or Neg) and "full" (the whole vocabulary).
const std::vector<CapabilityProfile>& builtin_profiles();

/// Resolution order: builtin name first, then filesystem path, then
/// `<name>.profile.json` under each directory in the RETARGET_PROFILE_PATH
/// environment variable. Throws UsageError when nothing matches.
CapabilityProfile resolve_profile(const std::string& name_or_path);

}  // namespace retarget
