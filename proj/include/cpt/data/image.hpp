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

#include <filesystem>
#include <stdexcept>
#include <vector>

#include "cpt/autodiff.hpp"

namespace cpt::data {

struct ImageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Pixels in [0, 1], stored row-major as (y, x, channel).
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> pixels;

  static Image zeros(int height, int width, int channels);

  double& at(int y, int x, int c = 0) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int y, int x, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  /// Throws ImageError unless dimensions are positive, the buffer fills them
  /// and every value is finite and within [0, 1].
  void validate() const;

  /// [H x W x C] constant tensor.
  Tensor to_tensor() const;

  bool operator==(const Image&) const = default;
};

// Raw image file: u16 height, u16 width, u16 channels, u16 reserved (all
// little-endian), followed by H*W*C little-endian float32 pixels.
void write_image_file(const std::filesystem::path& path, const Image& image);
Image read_image_file(const std::filesystem::path& path);

}  // namespace cpt::data
