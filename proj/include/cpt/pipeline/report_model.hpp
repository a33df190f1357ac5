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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpt/autodiff.hpp"
#include "cpt/checkpoint.hpp"
#include "cpt/data/image.hpp"
#include "cpt/data/tokenizer.hpp"
#include "cpt/model/backbone.hpp"
#include "cpt/model/config.hpp"
#include "cpt/model/vision.hpp"
#include "cpt/prompt/customization.hpp"

namespace cpt {

/// Segment lengths of a mixed sequence laid out visual, prompt, text.
struct SequenceLayout {
  Index visual = 0;
  Index prompt = 0;
  Index text = 0;

  Index prefix() const { return visual + prompt; }
  Index total() const { return visual + prompt + text; }
};

struct MixedSequence {
  Tensor z;  // [K x D]
  SequenceLayout layout;
};

/// Visual tokens and customized prompts for one image; everything generation
/// needs from the image side.
struct Conditioning {
  Tensor visual;   // [M x D]
  Tensor prompts;  // [N x D]
};

/// The full image-to-report model. The backbone, its embeddings and the
/// vocabulary head are frozen; encoder, projection, promptbook and the
/// parameter network train.
class ReportModel {
 public:
  /// Random initialization from `seed`. `config.vocab_size` is taken from the
  /// tokenizer. When `language_model` is given its backbone and head weights
  /// replace the random ones before the promptbook is drawn.
  ReportModel(ModelConfig config, data::Tokenizer tokenizer, std::uint64_t seed,
              const Checkpoint* language_model = nullptr);

  const ModelConfig& config() const { return config_; }
  const data::Tokenizer& tokenizer() const { return tokenizer_; }

  Conditioning condition(const data::Image& image) const;

  /// All parameters in a fixed order.
  std::vector<Parameter> parameters() const;
  std::vector<Parameter> trainable_parameters() const;
  /// Backbone (with embeddings) and vocabulary head.
  std::vector<Parameter> frozen_parameters() const;

  /// Copies backbone and head weights by name and freezes them.
  void load_language_model(const Checkpoint& checkpoint);

  nlohmann::json meta() const;
  void save(const std::filesystem::path& path, nlohmann::json extra = nlohmann::json::object()) const;
  static ReportModel load(const std::filesystem::path& path);
  static ReportModel from_checkpoint(const Checkpoint& checkpoint);

  /// Value snapshot of every parameter, restorable with restore().
  std::vector<Mat> snapshot() const;
  void restore(const std::vector<Mat>& values);

  VisionEncoder encoder;
  Projection projection;
  LlmBackbone backbone;
  VocabHead head;
  Promptbook promptbook;
  std::optional<ParamNet> param_net;
  /// Applied whenever prompts are customized, in training and inference.
  PromptAblation ablation;

 private:
  ModelConfig config_;
  data::Tokenizer tokenizer_;
};

/// Z = concat(V, P', embed(text_ids)). `text_ids` must start with BOS.
MixedSequence assemble(const LlmBackbone& backbone, const Tensor& visual, const Tensor& prompts,
                       std::span<const int> text_ids);

/// Per-position targets for teacher forcing: the hidden state at text
/// position j predicts ids[j + 1]. Visual and prompt positions are masked.
struct TeacherTargets {
  std::vector<int> targets;  // length K
  std::vector<bool> mask;    // length K
};
TeacherTargets teacher_targets(const SequenceLayout& layout, std::span<const int> ids);

/// Report ids (BOS ... EOS) clipped to what a sequence can hold. Sets
/// `truncated` when anything was cut.
std::vector<int> training_ids(const ReportModel& model, const std::string& report, int max_report_tokens,
                              bool* truncated = nullptr);

/// Masked next-token cross-entropy of one record, averaged over its
/// supervised positions. Also returns the full logits when asked.
Tensor record_loss(const ReportModel& model, const data::Image& image, std::span<const int> ids,
                   Tensor* logits = nullptr);

enum class Termination { Eos, MaxLen };
std::string_view to_string(Termination t);

struct GenerationResult {
  std::vector<int> ids;         // BOS followed by generated ids
  std::string text;
  std::vector<double> margins;  // chosen logit minus runner-up, per step
  Termination terminated_by = Termination::MaxLen;
};

/// Index of the largest entry; ties go to the lowest index.
int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& row);

/// Greedy decoding with cached keys and values. Emits at most
/// min(max_len, K_max - M - N) tokens.
GenerationResult generate(const ReportModel& model, const data::Image& image, int max_len);
/// Same decoding, recomputing the full sequence each step.
GenerationResult generate_reference(const ReportModel& model, const data::Image& image, int max_len);

}  // namespace cpt
