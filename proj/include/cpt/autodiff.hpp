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

#include "cpt/autodiff/adam.hpp"
#include "cpt/autodiff/ops.hpp"
#include "cpt/autodiff/tensor.hpp"

namespace cpt {

// The model stack runs in double precision throughout.
using Scalar = double;
using Tensor = ad::Tensor<Scalar>;
using Tape = ad::Tape<Scalar>;
using TapeScope = ad::TapeScope<Scalar>;
using NoGradScope = ad::NoGradScope<Scalar>;
using Parameter = ad::Parameter<Scalar>;
using Mat = ad::Matrix<Scalar>;
using ad::Index;
using ad::Shape;

}  // namespace cpt
