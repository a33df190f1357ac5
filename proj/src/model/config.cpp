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

#include "cpt/model/config.hpp"

namespace cpt {

std::string_view to_string(CustomizationMode mode) {
  switch (mode) {
    case CustomizationMode::None: return "none";
    case CustomizationMode::PromptWise: return "prompt_wise";
    case CustomizationMode::BookWise: return "book_wise";
  }
  return "?";
}

CustomizationMode parse_mode(std::string_view name) {
  if (name == "none") return CustomizationMode::None;
  if (name == "prompt_wise") return CustomizationMode::PromptWise;
  if (name == "book_wise") return CustomizationMode::BookWise;
  throw ConfigError("unknown mode '" + std::string(name) + "' (valid: none, prompt_wise, book_wise)");
}

int ModelConfig::encoder_blocks() const {
  for (int b = 1; b <= 8; ++b) {
    const int f = 1 << b;
    if (image.height % f || image.width % f) break;
    if ((image.height / f) * (image.width / f) == visual_tokens) return b;
  }
  throw ConfigError("no stride-2 block count maps a " + std::to_string(image.height) + "x" +
                    std::to_string(image.width) + " image to M=" + std::to_string(visual_tokens) + " positions");
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive, got " + std::to_string(v));
  };
  positive(d_model, "D");
  positive(heads, "heads");
  positive(vocab_size, "V");
  positive(max_positions, "K_max");
  positive(visual_tokens, "M");
  positive(feature_dim, "C_prime");
  positive(num_prompts, "N");
  positive(image.height, "image.H");
  positive(image.width, "image.W");
  positive(image.channels, "image.C");
  if (layers < 0) throw ConfigError("L must be non-negative");
  if (d_model % heads) throw ConfigError("D must be divisible by heads");
  if (param_net_depth < 1 || param_net_depth > 3) throw ConfigError("param_net_depth must be 1, 2 or 3");
  if (visual_tokens + num_prompts + 1 > max_positions)
    throw ConfigError("K_max leaves no room for text after M + N prefix positions");
  const int blocks = encoder_blocks();
  if ((feature_dim >> (blocks - 1)) < 1) throw ConfigError("C_prime too small for the encoder depth");
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 16;
  c.layers = 1;
  c.heads = 2;
  c.vocab_size = 12;
  c.max_positions = 32;
  c.visual_tokens = 4;
  c.feature_dim = 8;
  c.num_prompts = 4;
  c.image = {16, 16, 1};
  c.param_net_depth = 2;
  return c;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"D", c.d_model},
       {"L", c.layers},
       {"heads", c.heads},
       {"V", c.vocab_size},
       {"K_max", c.max_positions},
       {"M", c.visual_tokens},
       {"C_prime", c.feature_dim},
       {"N", c.num_prompts},
       {"image", {{"H", c.image.height}, {"W", c.image.width}, {"C", c.image.channels}}},
       {"param_net_depth", c.param_net_depth},
       {"mode", to_string(c.mode)},
       {"norm_eps", c.norm_eps}};
}

void merge_json(const nlohmann::json& j, ModelConfig& c) {
  auto get = [&](const char* key, int& field) {
    if (j.contains(key)) field = j.at(key).get<int>();
  };
  get("D", c.d_model);
  get("L", c.layers);
  get("heads", c.heads);
  get("V", c.vocab_size);
  get("K_max", c.max_positions);
  get("M", c.visual_tokens);
  get("C_prime", c.feature_dim);
  get("N", c.num_prompts);
  get("param_net_depth", c.param_net_depth);
  if (j.contains("image")) {
    const auto& img = j.at("image");
    if (img.contains("H")) c.image.height = img.at("H").get<int>();
    if (img.contains("W")) c.image.width = img.at("W").get<int>();
    if (img.contains("C")) c.image.channels = img.at("C").get<int>();
  }
  if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
  if (j.contains("norm_eps")) c.norm_eps = j.at("norm_eps").get<double>();
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c = ModelConfig{};
  merge_json(j, c);
}

}  // namespace cpt
