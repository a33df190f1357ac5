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

#include "cpt/prompt/customization.hpp"

#include <cmath>
#include <string>

#include "cpt/model/init.hpp"

namespace cpt {

Promptbook::Promptbook(int num_prompts, int d_model, double stddev, Rng& rng)
    : book(normal_tensor({num_prompts, d_model}, stddev, rng, true)) {}

ParamNet::ParamNet(CustomizationMode mode, int depth, int feature_dim, int num_prompts, Rng& rng)
    : mode_(mode), feature_dim_(feature_dim), num_prompts_(num_prompts) {
  if (mode == CustomizationMode::None) throw ConfigError("parameter network needs a customization mode");
  if (depth < 1 || depth > 3) throw ConfigError("parameter network depth must be 1, 2 or 3");
  const int out = mode == CustomizationMode::PromptWise ? 2 * num_prompts : 2;
  for (int l = 0; l < depth; ++l) {
    const bool head = l == depth - 1;
    const int width = head ? out : feature_dim;
    Layer layer;
    layer.weight = head ? Tensor::zeros({feature_dim, width}, true)
                        : normal_tensor({feature_dim, width}, std::sqrt(2.0 / feature_dim), rng, true);
    layer.bias = Tensor::zeros({width}, true);
    layers_.push_back(std::move(layer));
  }
}

AffineParams ParamNet::compute(const Tensor& features) const {
  if (mode_ == CustomizationMode::None) throw ad::ContractError("compute_params called with mode none");
  if (features.rank() != 2 || features.cols() != feature_dim_)
    throw ad::DimensionError("parameter network expects [M x " + std::to_string(feature_dim_) + "], got " +
                             ad::to_string(features.shape()));
  calls_->fetch_add(1);
  Tensor h = ad::mean(features, 0);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = ad::linear(h, layers_[l].weight, layers_[l].bias);
    if (l + 1 < layers_.size()) h = ad::gelu(h);
  }
  const Index half = h.cols() / 2;
  AffineParams p;
  p.mode = mode_;
  p.gamma = ad::add_scalar(ad::slice(h, 0, 0, half), 1.0);
  p.beta = ad::slice(h, 0, half, half);
  if (mode_ == CustomizationMode::BookWise) {
    p.gamma = ad::reshape(p.gamma, {});
    p.beta = ad::reshape(p.beta, {});
  }
  return p;
}

std::vector<Parameter> ParamNet::parameters() const {
  std::vector<Parameter> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = "param_net.layer" + std::to_string(l) + ".";
    out.push_back({p + "weight", layers_[l].weight});
    out.push_back({p + "bias", layers_[l].bias});
  }
  return out;
}

Tensor customize_promptwise(const Tensor& book, const Tensor& gamma, const Tensor& beta) {
  const Index n = book.rows();
  if (gamma.size() != n || beta.size() != n)
    throw ad::DimensionError("prompt-wise transform needs " + std::to_string(n) + " gammas and betas, got " +
                             ad::to_string(gamma.shape()) + " and " + ad::to_string(beta.shape()));
  return ad::mul(book, ad::reshape(gamma, {n, 1})) + ad::reshape(beta, {n, 1});
}

Tensor customize_bookwise(const Tensor& book, const Tensor& gamma, const Tensor& beta) {
  if (gamma.size() != 1 || beta.size() != 1)
    throw ad::DimensionError("book-wise transform needs scalar gamma and beta, got " + ad::to_string(gamma.shape()) +
                             " and " + ad::to_string(beta.shape()));
  if (!std::isfinite(gamma.item()) || !std::isfinite(beta.item()))
    throw ad::NumericError("book-wise transform parameters must be finite");
  return ad::mul(book, gamma) + beta;
}

AffineParams ablate_params(const AffineParams& params, bool drop_gamma, bool drop_beta) {
  AffineParams out = params;
  if (drop_gamma) out.gamma = Tensor::filled(params.gamma.shape(), 1.0);
  if (drop_beta) out.beta = Tensor::zeros(params.beta.shape());
  return out;
}

Tensor customized_prompts(const Tensor& features, const Promptbook& book, const ParamNet* net,
                          CustomizationMode mode, PromptAblation ablation) {
  if (mode == CustomizationMode::None) return book.book;
  if (!net || net->mode() != mode) throw ad::ContractError("customization mode has no matching parameter network");
  AffineParams params = net->compute(features);
  if (ablation.drop_gamma || ablation.drop_beta) params = ablate_params(params, ablation.drop_gamma, ablation.drop_beta);
  return mode == CustomizationMode::PromptWise ? customize_promptwise(book.book, params.gamma, params.beta)
                                               : customize_bookwise(book.book, params.gamma, params.beta);
}

}  // namespace cpt
