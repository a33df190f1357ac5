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

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "cpt/autodiff/tensor.hpp"

namespace cpt::ad {

/// A named model tensor. Trainability is the tensor's gradient flag, so a
/// frozen parameter can never accumulate gradient.
template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> tensor;

  bool trainable() const { return tensor.requires_grad(); }
  void set_trainable(bool on) { tensor.set_requires_grad(on); }
};

template <typename Scalar>
void zero_grad(std::span<Parameter<Scalar>> params) {
  for (auto& p : params) p.tensor.zero_grad();
}

template <typename Scalar>
struct AdamOptions {
  Scalar learning_rate = Scalar(3e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
};

template <typename Scalar>
struct AdamState {
  struct Moments {
    Matrix<Scalar> first;
    Matrix<Scalar> second;
  };

  AdamOptions<Scalar> options;
  std::uint64_t step = 0;
  std::map<std::string, Moments> moments;
};

/// One bias-corrected Adam update over the trainable parameters. Frozen
/// parameters are skipped and get no moment buffers.
template <typename Scalar>
void adam_step(std::span<Parameter<Scalar>> params, AdamState<Scalar>& state) {
  for (const auto& p : params)
    if (p.trainable() && !p.tensor.has_grad())
      throw ContractError("adam_step: trainable parameter '" + p.name + "' has no gradient");
  ++state.step;
  const auto& o = state.options;
  const Scalar t = static_cast<Scalar>(state.step);
  const Scalar correction1 = Scalar(1) - std::pow(o.beta1, t);
  const Scalar correction2 = Scalar(1) - std::pow(o.beta2, t);
  for (auto& p : params) {
    if (!p.trainable()) continue;
    const Matrix<Scalar>& g = p.tensor.grad();
    auto [it, fresh] = state.moments.try_emplace(p.name);
    auto& m = it->second;
    if (fresh) {
      m.first = Matrix<Scalar>::Zero(g.rows(), g.cols());
      m.second = Matrix<Scalar>::Zero(g.rows(), g.cols());
    }
    m.first = o.beta1 * m.first + (Scalar(1) - o.beta1) * g;
    m.second = o.beta2 * m.second + (Scalar(1) - o.beta2) * g.cwiseAbs2();
    auto step = (m.first.array() / correction1) / ((m.second.array() / correction2).sqrt() + o.epsilon);
    p.tensor.mutable_value().array() -= o.learning_rate * step;
  }
}

}  // namespace cpt::ad
