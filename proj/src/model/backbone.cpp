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

#include "cpt/model/backbone.hpp"

#include <cmath>

#include "cpt/model/init.hpp"

namespace cpt {

LlmBackbone::LlmBackbone(const ModelConfig& config, Rng& rng)
    : d_model_(config.d_model), heads_(config.heads), eps_(config.norm_eps) {
  const int d = config.d_model;
  const double embed_std = 1.0 / std::sqrt(d);
  const double residual_std = 1.0 / std::sqrt(d) / std::sqrt(2.0 * std::max(1, config.layers));
  token_embedding = normal_tensor({config.vocab_size, d}, embed_std, rng, true);
  position_embedding = normal_tensor({config.max_positions, d}, embed_std, rng, true);
  for (int l = 0; l < config.layers; ++l) {
    Block b;
    b.attn_norm = Tensor::filled({d}, 1.0, true);
    b.qkv_weight = normal_tensor({d, 3 * d}, 1.0 / std::sqrt(d), rng, true);
    b.qkv_bias = Tensor::zeros({3 * d}, true);
    b.out_weight = normal_tensor({d, d}, residual_std, rng, true);
    b.out_bias = Tensor::zeros({d}, true);
    b.ffn_norm = Tensor::filled({d}, 1.0, true);
    b.ffn_in_weight = normal_tensor({d, 4 * d}, 1.0 / std::sqrt(d), rng, true);
    b.ffn_in_bias = Tensor::zeros({4 * d}, true);
    b.ffn_out_weight = normal_tensor({4 * d, d}, residual_std / 2.0, rng, true);
    b.ffn_out_bias = Tensor::zeros({d}, true);
    blocks_.push_back(std::move(b));
  }
  final_norm = Tensor::filled({d}, 1.0, true);
}

Tensor LlmBackbone::embed(std::span<const int> ids) const { return ad::embedding(token_embedding, ids); }

Tensor LlmBackbone::forward(const Tensor& z, Index offset) const {
  if (z.rank() != 2 || z.cols() != d_model_)
    throw ad::DimensionError("backbone expects [K x " + std::to_string(d_model_) + "], got " +
                             ad::to_string(z.shape()));
  const Index k = z.rows();
  if (offset < 0 || offset + k > max_positions())
    throw LengthError("sequence of " + std::to_string(offset + k) + " positions exceeds K_max=" +
                      std::to_string(max_positions()));
  Tensor h = z + ad::slice(position_embedding, 0, offset, k);
  for (const auto& b : blocks_) {
    Tensor qkv = ad::linear(ad::rms_norm(h, b.attn_norm, eps_), b.qkv_weight, b.qkv_bias);
    h = h + ad::linear(ad::causal_self_attention(qkv, heads_), b.out_weight, b.out_bias);
    Tensor f = ad::gelu(ad::linear(ad::rms_norm(h, b.ffn_norm, eps_), b.ffn_in_weight, b.ffn_in_bias));
    h = h + ad::linear(f, b.ffn_out_weight, b.ffn_out_bias);
  }
  return ad::rms_norm(h, final_norm, eps_);
}

std::vector<Parameter> LlmBackbone::parameters() const {
  std::vector<Parameter> out{{"backbone.token_embedding", token_embedding},
                             {"backbone.position_embedding", position_embedding}};
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const std::string p = "backbone.block" + std::to_string(l) + ".";
    const auto& b = blocks_[l];
    out.push_back({p + "attn_norm", b.attn_norm});
    out.push_back({p + "qkv.weight", b.qkv_weight});
    out.push_back({p + "qkv.bias", b.qkv_bias});
    out.push_back({p + "out.weight", b.out_weight});
    out.push_back({p + "out.bias", b.out_bias});
    out.push_back({p + "ffn_norm", b.ffn_norm});
    out.push_back({p + "ffn_in.weight", b.ffn_in_weight});
    out.push_back({p + "ffn_in.bias", b.ffn_in_bias});
    out.push_back({p + "ffn_out.weight", b.ffn_out_weight});
    out.push_back({p + "ffn_out.bias", b.ffn_out_bias});
  }
  out.push_back({"backbone.final_norm", final_norm});
  return out;
}

void LlmBackbone::set_trainable(bool on) {
  for (auto& p : parameters()) p.set_trainable(on);
}

VocabHead::VocabHead(int d_model, int vocab_size, Rng& rng)
    : weight(normal_tensor({d_model, vocab_size}, 1.0 / std::sqrt(d_model), rng, true)),
      bias(Tensor::zeros({vocab_size}, true)) {}

Tensor VocabHead::logits(const Tensor& hidden) const { return ad::linear(hidden, weight, bias); }

std::vector<Parameter> VocabHead::parameters() const {
  return {{"vocab_head.weight", weight}, {"vocab_head.bias", bias}};
}

void VocabHead::set_trainable(bool on) {
  for (auto& p : parameters()) p.set_trainable(on);
}

DecoderCache::DecoderCache(const LlmBackbone& backbone)
    : backbone_(&backbone), keys_(backbone.blocks().size()), values_(backbone.blocks().size()) {
  const Index d = backbone.d_model();
  for (auto& k : keys_) k.resize(backbone.max_positions(), d);
  for (auto& v : values_) v.resize(backbone.max_positions(), d);
}

Mat DecoderCache::extend(const Mat& rows) {
  NoGradScope no_grad;
  const LlmBackbone& bb = *backbone_;
  const Index n = rows.rows(), d = bb.d_model(), heads = bb.heads(), hd = d / heads;
  if (length_ + n > bb.max_positions())
    throw LengthError("sequence of " + std::to_string(length_ + n) + " positions exceeds K_max=" +
                      std::to_string(bb.max_positions()));
  const double eps = bb.norm_eps();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  Tensor h = Tensor::from_matrix(rows) + ad::slice(bb.position_embedding, 0, length_, n);
  for (std::size_t l = 0; l < bb.blocks().size(); ++l) {
    const auto& b = bb.blocks()[l];
    Mat qkv = ad::linear(ad::rms_norm(h, b.attn_norm, eps), b.qkv_weight, b.qkv_bias).value();
    keys_[l].middleRows(length_, n) = qkv.middleCols(d, d);
    values_[l].middleRows(length_, n) = qkv.middleCols(2 * d, d);
    Mat attended(n, d);
    for (Index hh = 0; hh < heads; ++hh) {
      for (Index i = 0; i < n; ++i) {
        const Index visible = length_ + i + 1;
        Eigen::Matrix<double, 1, Eigen::Dynamic> s =
            (qkv.row(i).segment(hh * hd, hd) * keys_[l].block(0, hh * hd, visible, hd).transpose()) * inv_sqrt;
        const double mx = s.maxCoeff();
        s = (s.array() - mx).exp();
        s /= s.sum();
        attended.row(i).segment(hh * hd, hd) = s * values_[l].block(0, hh * hd, visible, hd);
      }
    }
    h = h + ad::linear(Tensor::from_matrix(attended), b.out_weight, b.out_bias);
    Tensor f = ad::gelu(ad::linear(ad::rms_norm(h, b.ffn_norm, eps), b.ffn_in_weight, b.ffn_in_bias));
    h = h + ad::linear(f, b.ffn_out_weight, b.ffn_out_bias);
  }
  length_ += n;
  return ad::rms_norm(h, bb.final_norm, eps).value();
}

}  // namespace cpt
