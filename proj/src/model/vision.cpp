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

#include "cpt/model/vision.hpp"

#include <cmath>

#include "cpt/model/init.hpp"

namespace cpt {

VisionEncoder::VisionEncoder(const ModelConfig& config, Rng& rng)
    : input_(config.image), feature_dim_(config.feature_dim), eps_(config.norm_eps) {
  const int count = config.encoder_blocks();
  int in_channels = config.image.channels;
  int h = config.image.height, w = config.image.width;
  for (int b = 0; b < count; ++b) {
    const int out_channels = std::max(1, config.feature_dim >> (count - 1 - b));
    const int fan_in = 9 * in_channels;
    Block block;
    block.weight = normal_tensor({fan_in, out_channels}, std::sqrt(2.0 / fan_in), rng, true);
    block.bias = Tensor::zeros({out_channels}, true);
    block.norm_gain = Tensor::filled({out_channels}, 1.0, true);
    block.norm_bias = Tensor::zeros({out_channels}, true);
    h /= 2;
    w /= 2;
    block.out_height = h;
    block.out_width = w;
    blocks_.push_back(std::move(block));
    in_channels = out_channels;
  }
}

Tensor VisionEncoder::encode(const data::Image& image) const {
  if (image.height != input_.height || image.width != input_.width || image.channels != input_.channels)
    throw ConfigError("image is " + std::to_string(image.height) + "x" + std::to_string(image.width) + "x" +
                      std::to_string(image.channels) + " but the encoder expects " + std::to_string(input_.height) +
                      "x" + std::to_string(input_.width) + "x" + std::to_string(input_.channels));
  Tensor x = image.to_tensor();
  for (const auto& block : blocks_) {
    Tensor conv = ad::linear(ad::patches(x, 3, 2, 1), block.weight, block.bias);
    x = ad::gelu(ad::layer_norm(conv, block.norm_gain, block.norm_bias, eps_));
  }
  return ad::reshape(x, {static_cast<Index>(x.rows()), x.cols()});
}

std::vector<Parameter> VisionEncoder::parameters() const {
  std::vector<Parameter> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = "encoder.block" + std::to_string(i) + ".";
    out.push_back({p + "weight", blocks_[i].weight});
    out.push_back({p + "bias", blocks_[i].bias});
    out.push_back({p + "norm_gain", blocks_[i].norm_gain});
    out.push_back({p + "norm_bias", blocks_[i].norm_bias});
  }
  return out;
}

Projection::Projection(int in_dim, int out_dim, Rng& rng)
    : weight(normal_tensor({in_dim, out_dim}, 1.0 / std::sqrt(in_dim), rng, true)),
      bias(Tensor::zeros({out_dim}, true)) {}

Tensor Projection::project(const Tensor& features) const {
  if (features.cols() != weight.rows())
    throw ad::DimensionError("projection expects " + std::to_string(weight.rows()) + " feature channels, got " +
                             ad::to_string(features.shape()));
  return ad::linear(features, weight, bias);
}

std::vector<Parameter> Projection::parameters() const {
  return {{"projection.weight", weight}, {"projection.bias", bias}};
}

}  // namespace cpt
