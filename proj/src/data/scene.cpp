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

#include "cpt/data/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "cpt/data/tokenizer.hpp"
#include "cpt/util/rng.hpp"

namespace cpt::data {
namespace {

constexpr std::array kKinds = {ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle};
constexpr std::array kSizes = {ShapeSize::Small, ShapeSize::Large};
constexpr std::array kQuadrants = {Quadrant::UpperLeft, Quadrant::UpperRight, Quadrant::LowerLeft,
                                   Quadrant::LowerRight};

constexpr int kSubsamples = 4;

// Point-in-shape test in coordinates relative to the shape center.
bool inside(ShapeKind kind, double r, double dx, double dy) {
  switch (kind) {
    case ShapeKind::Circle:
      return dx * dx + dy * dy <= r * r;
    case ShapeKind::Square: {
      const double half = 0.85 * r;
      return std::abs(dx) <= half && std::abs(dy) <= half;
    }
    case ShapeKind::Triangle: {
      // Upward-pointing isosceles triangle: apex (0, -r), base at y = 0.8 r.
      const double top = -r, base = 0.8 * r, half_base = 0.95 * r;
      if (dy < top || dy > base) return false;
      const double t = (dy - top) / (base - top);
      return std::abs(dx) <= t * half_base;
    }
  }
  return false;
}

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(const std::array<Enum, N>& values, std::string_view word) {
  for (Enum v : values)
    if (to_string(v) == word) return v;
  return std::nullopt;
}

}  // namespace

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Circle: return "circle";
    case ShapeKind::Square: return "square";
    case ShapeKind::Triangle: return "triangle";
  }
  return "?";
}

std::string_view to_string(ShapeSize size) { return size == ShapeSize::Small ? "small" : "large"; }

std::string_view to_string(Quadrant quadrant) {
  switch (quadrant) {
    case Quadrant::UpperLeft: return "upper left";
    case Quadrant::UpperRight: return "upper right";
    case Quadrant::LowerLeft: return "lower left";
    case Quadrant::LowerRight: return "lower right";
  }
  return "?";
}

void SceneSpec::canonicalize() {
  if (shapes.size() > 3) throw SceneError("scene has " + std::to_string(shapes.size()) + " shapes (max 3)");
  std::sort(shapes.begin(), shapes.end(),
            [](const PlacedShape& a, const PlacedShape& b) { return a.quadrant < b.quadrant; });
  for (std::size_t i = 1; i < shapes.size(); ++i)
    if (shapes[i].quadrant == shapes[i - 1].quadrant)
      throw SceneError("two shapes share the " + std::string(to_string(shapes[i].quadrant)) + " quadrant");
}

SceneSpec random_scene(std::uint64_t seed) {
  Rng rng(seed);
  SceneSpec scene;
  scene.seed = seed;
  const int count = rng.uniform_int(1, 3);
  std::array<Quadrant, 4> quadrants = kQuadrants;
  rng.shuffle(std::span<Quadrant>(quadrants));
  for (int i = 0; i < count; ++i) {
    PlacedShape s;
    s.kind = kKinds[static_cast<std::size_t>(rng.uniform_int(0, 2))];
    s.size = kSizes[static_cast<std::size_t>(rng.uniform_int(0, 1))];
    s.quadrant = quadrants[static_cast<std::size_t>(i)];
    scene.shapes.push_back(s);
  }
  scene.canonicalize();
  return scene;
}

Image render(const SceneSpec& scene, int height, int width) {
  if (height < 16 || width < 16)
    throw ImageError("render needs at least 16x16 pixels, got " + std::to_string(height) + "x" +
                     std::to_string(width));
  SceneSpec checked = scene;
  checked.canonicalize();
  Image img = Image::zeros(height, width, 1);
  const double half = std::min(height, width) / 4.0;
  for (const auto& shape : checked.shapes) {
    const int qi = static_cast<int>(shape.quadrant);
    const double cx = (qi % 2 == 0 ? 0.25 : 0.75) * width;
    const double cy = (qi < 2 ? 0.25 : 0.75) * height;
    const double r = (shape.size == ShapeSize::Large ? 0.8 : 0.45) * half;
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)) - 1);
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(cy + r)) + 1);
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)) - 1);
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(cx + r)) + 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        int hits = 0;
        for (int sy = 0; sy < kSubsamples; ++sy)
          for (int sx = 0; sx < kSubsamples; ++sx) {
            double px = x + (sx + 0.5) / kSubsamples, py = y + (sy + 0.5) / kSubsamples;
            hits += inside(shape.kind, r, px - cx, py - cy);
          }
        img.at(y, x) = std::max(img.at(y, x), hits / double(kSubsamples * kSubsamples));
      }
  }
  return img;
}

std::string templatize(const SceneSpec& scene) {
  SceneSpec checked = scene;
  checked.canonicalize();
  std::string out;
  for (const auto& s : checked.shapes) {
    out += "there is a ";
    out += to_string(s.size);
    out += ' ';
    out += to_string(s.kind);
    out += " in the ";
    out += to_string(s.quadrant);
    out += " . ";
  }
  out += "no other findings .";
  return out;
}

std::optional<SceneSpec> parse_report(std::string_view report) {
  std::vector<std::string> words = split_words(report);
  SceneSpec scene;
  std::size_t i = 0;
  auto word = [&](std::size_t k) -> std::string_view { return i + k < words.size() ? words[i + k] : ""; };
  while (word(0) == "there") {
    if (word(1) != "is" || word(2) != "a" || word(5) != "in" || word(6) != "the" || word(9) != ".")
      return std::nullopt;
    auto size = lookup(kSizes, word(3));
    auto kind = lookup(kKinds, word(4));
    auto quadrant = lookup(kQuadrants, std::string(word(7)) + " " + std::string(word(8)));
    if (!size || !kind || !quadrant) return std::nullopt;
    scene.shapes.push_back({*kind, *size, *quadrant});
    i += 10;
  }
  if (word(0) != "no" || word(1) != "other" || word(2) != "findings" || word(3) != "." || i + 4 != words.size())
    return std::nullopt;
  try {
    scene.canonicalize();
  } catch (const SceneError&) {
    return std::nullopt;
  }
  return scene;
}

void to_json(nlohmann::json& j, const SceneSpec& scene) {
  j = nlohmann::json::object();
  j["seed"] = scene.seed;
  j["shapes"] = nlohmann::json::array();
  for (const auto& s : scene.shapes)
    j["shapes"].push_back({{"kind", to_string(s.kind)}, {"size", to_string(s.size)}, {"quadrant", to_string(s.quadrant)}});
}

void from_json(const nlohmann::json& j, SceneSpec& scene) {
  scene = SceneSpec{};
  scene.seed = j.value("seed", std::uint64_t{0});
  for (const auto& item : j.at("shapes")) {
    auto kind = lookup(kKinds, item.at("kind").get<std::string>());
    auto size = lookup(kSizes, item.at("size").get<std::string>());
    auto quadrant = lookup(kQuadrants, item.at("quadrant").get<std::string>());
    if (!kind || !size || !quadrant) throw SceneError("unknown shape attribute in " + item.dump());
    scene.shapes.push_back({*kind, *size, *quadrant});
  }
  scene.canonicalize();
}

}  // namespace cpt::data
