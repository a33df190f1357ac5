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

#include <string>
#include <vector>

#include "cpt/autodiff.hpp"
#include "cpt/data/image.hpp"
#include "cpt/model/config.hpp"
#include "cpt/util/rng.hpp"

namespace cpt {

/// Stack of stride-2 3x3 convolutions, each followed by a per-position
/// layer norm over channels and GELU. Output is the final feature grid
/// flattened row-major to [M x C'].
class VisionEncoder {
 public:
  struct Block {
    Tensor weight;  // [9 * C_in x C_out]
    Tensor bias;    // [C_out]
    Tensor norm_gain;
    Tensor norm_bias;
    int out_height = 0;
    int out_width = 0;
  };

  VisionEncoder() = default;
  VisionEncoder(const ModelConfig& config, Rng& rng);

  /// Throws ConfigError when the image size differs from the config.
  Tensor encode(const data::Image& image) const;

  std::vector<Parameter> parameters() const;
  const std::vector<Block>& blocks() const { return blocks_; }

 private:
  ImageShape input_;
  int feature_dim_ = 0;
  double eps_ = 1e-5;
  std::vector<Block> blocks_;
};

/// Per-position affine map from C' features into the D-dim embedding space.
class Projection {
 public:
  Projection() = default;
  Projection(int in_dim, int out_dim, Rng& rng);

  Tensor project(const Tensor& features) const;
  std::vector<Parameter> parameters() const;

  Tensor weight;  // [C' x D]
  Tensor bias;    // [D]
};

}  // namespace cpt
