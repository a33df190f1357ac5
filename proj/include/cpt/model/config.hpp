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

#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace cpt {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct LengthError : std::length_error {
  using std::length_error::length_error;
};

enum class CustomizationMode { None, PromptWise, BookWise };

std::string_view to_string(CustomizationMode mode);
/// Accepts "none", "prompt_wise", "book_wise"; throws ConfigError otherwise.
CustomizationMode parse_mode(std::string_view name);

struct ImageShape {
  int height = 32;
  int width = 32;
  int channels = 1;
};

/// Sizes of every component. Field names in JSON: D, L, heads, V, K_max, M,
/// C_prime, N, image {H, W, C}, param_net_depth, mode.
struct ModelConfig {
  int d_model = 64;           // D
  int layers = 2;             // L
  int heads = 4;
  int vocab_size = 0;         // V, taken from the tokenizer
  int max_positions = 96;     // K_max
  int visual_tokens = 16;     // M
  int feature_dim = 32;       // C'
  int num_prompts = 16;       // N
  ImageShape image;
  int param_net_depth = 2;
  CustomizationMode mode = CustomizationMode::PromptWise;
  double norm_eps = 1e-5;

  /// Number of stride-2 encoder blocks that take H x W down to M positions.
  int encoder_blocks() const;
  /// Throws ConfigError on inconsistent sizes.
  void validate() const;
};

/// The small configuration used by gradient checks.
ModelConfig tiny_config();

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
/// Overlays only the fields present in `j` onto `c`.
void merge_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace cpt
