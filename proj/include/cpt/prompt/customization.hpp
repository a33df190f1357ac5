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

#include <atomic>
#include <cstdint>
#include <memory>
#include <vector>

#include "cpt/autodiff.hpp"
#include "cpt/model/config.hpp"
#include "cpt/util/rng.hpp"

namespace cpt {

/// N learnable base prompts living in the backbone's embedding space.
class Promptbook {
 public:
  Promptbook() = default;
  /// Entries ~ Normal(0, stddev); callers pass the frozen embedding table's
  /// empirical deviation.
  Promptbook(int num_prompts, int d_model, double stddev, Rng& rng);

  int size() const { return static_cast<int>(book.rows()); }
  std::vector<Parameter> parameters() const { return {{"prompts.book", book}}; }

  Tensor book;  // [N x D]
};

/// Image-conditioned affine parameters. Prompt-wise: gamma and beta are [N].
/// Book-wise: both are rank-0 scalars.
struct AffineParams {
  CustomizationMode mode = CustomizationMode::PromptWise;
  Tensor gamma;
  Tensor beta;
};

/// The parameter network: mean-pool the [M x C'] features to [C'], run a
/// trunk of `depth` linear layers (GELU between, hidden width C'), and split
/// the head output into (delta, beta) with gamma = 1 + delta. The last layer
/// starts at zero so a fresh network yields the identity transform.
class ParamNet {
 public:
  struct Layer {
    Tensor weight;
    Tensor bias;
  };

  ParamNet() = default;
  ParamNet(CustomizationMode mode, int depth, int feature_dim, int num_prompts, Rng& rng);

  /// Throws ad::ContractError for mode None and ad::DimensionError for
  /// features without C' columns.
  AffineParams compute(const Tensor& features) const;

  CustomizationMode mode() const { return mode_; }
  int depth() const { return static_cast<int>(layers_.size()); }
  /// 2N for prompt-wise, 2 for book-wise.
  int output_dim() const { return static_cast<int>(layers_.back().weight.cols()); }
  std::vector<Parameter> parameters() const;
  const std::vector<Layer>& layers() const { return layers_; }

  /// Number of compute() calls so far.
  std::uint64_t calls() const { return calls_->load(); }

 private:
  CustomizationMode mode_ = CustomizationMode::None;
  int feature_dim_ = 0;
  int num_prompts_ = 0;
  std::vector<Layer> layers_;
  std::shared_ptr<std::atomic<std::uint64_t>> calls_ = std::make_shared<std::atomic<std::uint64_t>>(0);
};

/// Row i of the result is gamma[i] * P[i] + beta[i], beta[i] broadcast over
/// the row. gamma and beta must have N entries.
Tensor customize_promptwise(const Tensor& book, const Tensor& gamma, const Tensor& beta);

/// gamma * P + beta over every entry; gamma and beta are single-element.
Tensor customize_bookwise(const Tensor& book, const Tensor& gamma, const Tensor& beta);

/// Replaces a dropped factor by its identity element (gamma -> 1,
/// beta -> 0). Leaves `params` untouched when neither flag is set.
AffineParams ablate_params(const AffineParams& params, bool drop_gamma, bool drop_beta);

struct PromptAblation {
  bool drop_gamma = false;
  bool drop_beta = false;
};

/// Mode None returns the book itself (task-wise prompting); otherwise the
/// book customized by the parameter network's output for `features`.
Tensor customized_prompts(const Tensor& features, const Promptbook& book, const ParamNet* net,
                          CustomizationMode mode, PromptAblation ablation = {});

}  // namespace cpt
