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

#include "cpt/autodiff.hpp"
#include "cpt/util/rng.hpp"

namespace cpt {

inline Tensor normal_tensor(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  auto [r, c] = ad::matrix_view(shape);
  Mat m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, stddev);
  return Tensor(std::move(shape), std::move(m), requires_grad);
}

}  // namespace cpt
