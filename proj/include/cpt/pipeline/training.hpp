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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cpt/data/dataset.hpp"
#include "cpt/metrics/metrics.hpp"
#include "cpt/pipeline/report_model.hpp"

namespace cpt {

using AdamState = ad::AdamState<Scalar>;

struct TrainConfig {
  double learning_rate = 3e-3;
  int batch_size = 8;
  int epochs = 30;
  int max_report_tokens = 40;
  std::uint64_t seed = 0;
  /// Generation budget when scoring the validation split.
  int max_len = 40;
  /// Validation records scored per epoch; 0 scores all of them.
  int val_limit = 0;
  /// Decay the learning rate to zero along a half cosine over all steps.
  bool cosine_decay = false;
};

nlohmann::json to_json(const TrainConfig& c);

struct TrainCounters {
  std::uint64_t steps = 0;
  std::uint64_t truncated_reports = 0;
};

/// One Adam step on the mean cross-entropy over every supervised token of
/// the batch. Each record runs on its own tape and gradients accumulate.
/// Returns the batch loss.
double train_step(ReportModel& model, std::span<const data::DatasetRecord* const> batch, AdamState& optimizer,
                  int max_report_tokens, TrainCounters& counters);

/// Loss of the batch without updating anything.
double batch_loss(const ReportModel& model, std::span<const data::DatasetRecord* const> batch,
                  int max_report_tokens);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  double val_bleu4 = 0;
  double seconds = 0;
};

struct TrainResult {
  double initial_loss = 0;
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  double best_val_bleu4 = -1;
  TrainCounters counters;
};

/// Trains the trainable parameters, scoring validation BLEU-4 after each
/// epoch, and leaves the model at its best validation epoch.
TrainResult train(ReportModel& model, const std::vector<data::DatasetRecord>& train_records,
                  const std::vector<data::DatasetRecord>& val_records, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

struct EvalResult {
  metrics::MetricReport report;
  std::vector<std::string> hypotheses;
  std::vector<std::string> references;
};

/// Scores `hypothesize(record)` against each record's report.
EvalResult evaluate_with(const std::vector<data::DatasetRecord>& records,
                         const std::function<std::string(const data::DatasetRecord&)>& hypothesize);
EvalResult evaluate(const ReportModel& model, const std::vector<data::DatasetRecord>& records, int max_len = 40);

/// Fraction of records with a scene whose hypothesis parses back to exactly
/// that scene's shapes.
double scene_accuracy(const std::vector<data::DatasetRecord>& records, std::span<const std::string> hypotheses);

/// A text-only backbone with its vocabulary head.
struct LanguageModel {
  ModelConfig config;
  data::Tokenizer tokenizer;
  LlmBackbone backbone;
  VocabHead head;

  LanguageModel(ModelConfig config, data::Tokenizer tokenizer, std::uint64_t seed);

  std::vector<Parameter> parameters() const;
  void freeze();
  nlohmann::json meta() const;
  Checkpoint checkpoint() const;
  void save(const std::filesystem::path& path, nlohmann::json extra = nlohmann::json::object()) const;
};

/// Mean next-token cross-entropy of one report placed at `offset`.
Tensor lm_loss(const LanguageModel& lm, std::span<const int> ids, Index offset);
double perplexity(const LanguageModel& lm, std::span<const std::string> reports, Index offset);
/// Greedy next token after `ids` placed at `offset`.
int lm_next_token(const LanguageModel& lm, std::span<const int> ids, Index offset);

struct LmPretrainConfig {
  double learning_rate = 3e-3;
  int batch_size = 16;
  int epochs = 15;
  std::uint64_t seed = 0;
  // Fraction of pretraining sequences preceded by an unscored context made of
  // the report's finding sentences in shuffled order. 0 is plain report-only
  // language modelling.
  double context_rate = 0.0;
};

nlohmann::json to_json(const LmPretrainConfig& c);

/// Finding sentences of `ids` (between BOS and the closing clause) in shuffled
/// order, without BOS or EOS.
std::vector<int> shuffled_context(const data::Tokenizer& tokenizer, std::span<const int> ids, Rng& rng);

struct PretrainResult {
  LanguageModel model;
  std::vector<double> epoch_loss;
  double heldout_perplexity = 0;
  double baseline_perplexity = 0;
};

/// Next-token training on reports alone, each placed at a random position
/// offset so that every positional embedding sees text. Perplexities are
/// measured at offset M + N, where reports sit in the mixed sequence. The
/// result is frozen.
PretrainResult pretrain_language_model(const ModelConfig& config, const data::Tokenizer& tokenizer,
                                       const std::vector<std::string>& train_reports,
                                       const std::vector<std::string>& heldout_reports, const LmPretrainConfig& lm,
                                       const std::function<void(int, double)>& on_epoch = {});

}  // namespace cpt
