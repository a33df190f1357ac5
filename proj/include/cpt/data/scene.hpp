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

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpt/data/image.hpp"

namespace cpt::data {

enum class ShapeKind { Circle, Square, Triangle };
enum class ShapeSize { Small, Large };
// Declaration order is the canonical sentence order of a report.
enum class Quadrant { UpperLeft, UpperRight, LowerLeft, LowerRight };

struct SceneError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct PlacedShape {
  ShapeKind kind = ShapeKind::Circle;
  ShapeSize size = ShapeSize::Small;
  Quadrant quadrant = Quadrant::UpperLeft;

  auto operator<=>(const PlacedShape&) const = default;
};

/// A synthetic scene: at most one shape per quadrant, kept sorted by
/// quadrant. The seed records provenance only; rendering ignores it.
struct SceneSpec {
  std::vector<PlacedShape> shapes;
  std::uint64_t seed = 0;

  /// Sorts shapes by quadrant and checks the 0..3-shape, one-per-quadrant
  /// invariant. Throws SceneError on violation.
  void canonicalize();
  bool same_shapes(const SceneSpec& other) const { return shapes == other.shapes; }

  bool operator==(const SceneSpec&) const = default;
};

std::string_view to_string(ShapeKind kind);
std::string_view to_string(ShapeSize size);
/// Two words, e.g. "upper left".
std::string_view to_string(Quadrant quadrant);

/// Draws 1-3 shapes in distinct quadrants, uniformly over kinds and sizes.
SceneSpec random_scene(std::uint64_t seed);

/// Grayscale rasterization with 4x4 supersampled coverage. Each shape is
/// centered in its quadrant. Requires height, width >= 16.
Image render(const SceneSpec& scene, int height, int width);

/// "there is a {size} {kind} in the {quadrant} ." per shape in quadrant
/// order, closed by "no other findings .".
std::string templatize(const SceneSpec& scene);

/// Inverse of templatize. Sentences may come in any order; returns nullopt
/// for text outside the grammar or with a repeated quadrant.
std::optional<SceneSpec> parse_report(std::string_view report);

void to_json(nlohmann::json& j, const SceneSpec& scene);
void from_json(const nlohmann::json& j, SceneSpec& scene);

}  // namespace cpt::data
