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

#include "cpt/data/image.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace cpt::data {
namespace {

template <typename T>
void write_le(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::filesystem::path& path) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ImageError("truncated image file " + path.string());
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace

Image Image::zeros(int height, int width, int channels) {
  Image img{height, width, channels, {}};
  img.pixels.assign(static_cast<std::size_t>(height) * width * channels, 0.0);
  return img;
}

void Image::validate() const {
  if (height <= 0 || width <= 0 || channels <= 0)
    throw ImageError("image dimensions must be positive, got " + std::to_string(height) + "x" +
                     std::to_string(width) + "x" + std::to_string(channels));
  if (pixels.size() != static_cast<std::size_t>(height) * width * channels)
    throw ImageError("pixel buffer of " + std::to_string(pixels.size()) + " values does not match " +
                     std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels));
  for (double p : pixels)
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) throw ImageError("pixel value outside [0, 1]");
}

Tensor Image::to_tensor() const {
  validate();
  return Tensor::from_values({height, width, channels}, pixels);
}

void write_image_file(const std::filesystem::path& path, const Image& image) {
  image.validate();
  if (image.height > 0xffff || image.width > 0xffff || image.channels > 0xffff)
    throw ImageError("image too large for the raw format");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageError("cannot write image file " + path.string());
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(image.height));
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(image.width));
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(image.channels));
  write_le<std::uint16_t>(out, 0);
  for (double p : image.pixels) write_le<float>(out, static_cast<float>(p));
  if (!out) throw ImageError("short write to " + path.string());
}

Image read_image_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("missing image file " + path.string());
  Image img;
  img.height = read_le<std::uint16_t>(in, path);
  img.width = read_le<std::uint16_t>(in, path);
  img.channels = read_le<std::uint16_t>(in, path);
  read_le<std::uint16_t>(in, path);
  img.pixels.resize(static_cast<std::size_t>(img.height) * img.width * img.channels);
  for (auto& p : img.pixels) p = read_le<float>(in, path);
  if (in.peek() != std::char_traits<char>::eof()) throw ImageError("trailing bytes in image file " + path.string());
  img.validate();
  return img;
}

}  // namespace cpt::data
