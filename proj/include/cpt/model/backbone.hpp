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

#include <span>
#include <string>
#include <vector>

#include "cpt/autodiff.hpp"
#include "cpt/model/config.hpp"
#include "cpt/util/rng.hpp"

namespace cpt {

/// Decoder-only transformer: learned positional embeddings added to the
/// input rows, L pre-norm blocks of causal multi-head attention and a
/// D -> 4D -> D GELU feed-forward, then a final norm. Norms are RMS norms.
class LlmBackbone {
 public:
  struct Block {
    Tensor attn_norm;   // [D]
    Tensor qkv_weight;  // [D x 3D]
    Tensor qkv_bias;    // [3D]
    Tensor out_weight;  // [D x D]
    Tensor out_bias;    // [D]
    Tensor ffn_norm;    // [D]
    Tensor ffn_in_weight;   // [D x 4D]
    Tensor ffn_in_bias;     // [4D]
    Tensor ffn_out_weight;  // [4D x D]
    Tensor ffn_out_bias;    // [D]
  };

  LlmBackbone() = default;
  LlmBackbone(const ModelConfig& config, Rng& rng);

  /// Token embeddings [n x D] for `ids`.
  Tensor embed(std::span<const int> ids) const;

  /// Hidden states [K x D] for input rows Z [K x D]; row i depends only on
  /// rows 0..i. Row i takes positional embedding offset + i. Throws
  /// LengthError when offset + K exceeds K_max.
  Tensor forward(const Tensor& z, Index offset = 0) const;

  std::vector<Parameter> parameters() const;
  void set_trainable(bool on);

  int d_model() const { return d_model_; }
  int heads() const { return heads_; }
  int max_positions() const { return static_cast<int>(position_embedding.rows()); }
  double norm_eps() const { return eps_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  std::vector<Block>& blocks() { return blocks_; }

  Tensor token_embedding;     // [V x D]
  Tensor position_embedding;  // [K_max x D]
  Tensor final_norm;          // [D]

 private:
  int d_model_ = 0;
  int heads_ = 1;
  double eps_ = 1e-5;
  std::vector<Block> blocks_;
};

/// Affine map from hidden states to vocabulary logits.
class VocabHead {
 public:
  VocabHead() = default;
  VocabHead(int d_model, int vocab_size, Rng& rng);

  Tensor logits(const Tensor& hidden) const;
  std::vector<Parameter> parameters() const;
  void set_trainable(bool on);

  Tensor weight;  // [D x V]
  Tensor bias;    // [V]
};

/// Per-layer keys and values of already-processed positions, for
/// incremental inference over a fixed backbone.
class DecoderCache {
 public:
  explicit DecoderCache(const LlmBackbone& backbone);

  /// Hidden states for `rows` [n x D] placed after the cached positions.
  Mat extend(const Mat& rows);
  Index length() const { return length_; }

 private:
  const LlmBackbone* backbone_;
  std::vector<Mat> keys_;
  std::vector<Mat> values_;
  Index length_ = 0;
};

}  // namespace cpt
