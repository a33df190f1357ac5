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
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpt/pipeline/training.hpp"

namespace cpt {

/// One experimental condition. `train_drop` is applied while training and
/// `infer_drop` only when scoring.
struct AblationCell {
  std::string id;
  CustomizationMode mode = CustomizationMode::PromptWise;
  int depth = 2;
  int num_prompts = 16;
  PromptAblation train_drop;
  PromptAblation infer_drop;
};

/// Suites: "table2" (customization modes), "table3" (gamma/beta removed at
/// training or at inference), "table3-inference" (inference removals only),
/// "table4" (parameter network depth 1..3), "fig4" (prompt counts 1, 4, M
/// and 2M). Throws ConfigError for an unknown suite.
std::vector<AblationCell> ablation_grid(std::string_view suite, const ModelConfig& base);
const std::vector<std::string>& ablation_suites();

struct AblationRow {
  std::string suite;
  AblationCell cell;
  std::uint64_t seed = 0;
  metrics::MetricReport report;
  double scene_accuracy = 0;
};

/// Trains and scores ablation cells against one frozen language model,
/// reusing any model already trained for the same condition and seed.
class AblationRunner {
 public:
  AblationRunner(ModelConfig base, TrainConfig train, Checkpoint language_model,
                 std::vector<data::DatasetRecord> train_records, std::vector<data::DatasetRecord> val_records,
                 std::vector<data::DatasetRecord> test_records,
                 std::optional<std::filesystem::path> cache_dir = std::nullopt);

  std::vector<AblationRow> run(std::string_view suite, std::span<const std::uint64_t> seeds);
  AblationRow run_cell(std::string_view suite, const AblationCell& cell, std::uint64_t seed);

  /// The model trained for `cell` and `seed`, with the cell's inference drop
  /// not applied.
  ReportModel& trained(const AblationCell& cell, std::uint64_t seed);

  void set_log(std::function<void(const std::string&)> log) { log_ = std::move(log); }
  std::size_t models_trained() const { return trained_count_; }

 private:
  std::string key(const AblationCell& cell, std::uint64_t seed) const;

  ModelConfig base_;
  TrainConfig train_;
  Checkpoint language_model_;
  std::vector<data::DatasetRecord> train_records_, val_records_, test_records_;
  std::optional<std::filesystem::path> cache_dir_;
  std::map<std::string, std::unique_ptr<ReportModel>> models_;
  std::function<void(const std::string&)> log_;
  std::size_t trained_count_ = 0;
};

extern const char* const kAblationCsvHeader;
void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows, bool header = true);

}  // namespace cpt
