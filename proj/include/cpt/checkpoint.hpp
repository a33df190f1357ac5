// Copyright 2026 The CPT Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpt/autodiff.hpp"

namespace cpt {

// Layout: 8-byte magic "CPTCKPT1", u64 little-endian header length, UTF-8
// JSON header, then every parameter's values as little-endian IEEE-754
// doubles in header order.
inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  nlohmann::json meta;
  std::vector<Parameter> params;

  /// Parameter by name; throws CheckpointError when absent.
  const Parameter& at(const std::string& name) const;
};

std::string serialize_checkpoint(const nlohmann::json& meta, std::span<const Parameter> params);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                     std::span<const Parameter> params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a over names, shapes, trainable flags and raw values.
std::uint64_t parameter_hash(std::span<const Parameter> params);

std::string hex64(std::uint64_t v);

}  // namespace cpt
