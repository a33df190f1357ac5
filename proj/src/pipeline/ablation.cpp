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

#include "cpt/pipeline/ablation.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace cpt {

const std::vector<std::string>& ablation_suites() {
  static const std::vector<std::string> suites{"table2", "table3", "table3-inference", "table4", "fig4"};
  return suites;
}

std::vector<AblationCell> ablation_grid(std::string_view suite, const ModelConfig& base) {
  AblationCell full{"full", CustomizationMode::PromptWise, base.param_net_depth, base.num_prompts, {}, {}};
  std::vector<AblationCell> cells;
  if (suite == "table2") {
    for (auto mode : {CustomizationMode::None, CustomizationMode::PromptWise, CustomizationMode::BookWise}) {
      AblationCell c = full;
      c.mode = mode;
      c.id = std::string(to_string(mode));
      cells.push_back(c);
    }
  } else if (suite == "table3" || suite == "table3-inference") {
    cells.push_back(full);
    if (suite == "table3") {
      cells.push_back(full);
      cells.back().id = "train-drop-gamma";
      cells.back().train_drop.drop_gamma = true;
      cells.push_back(full);
      cells.back().id = "train-drop-beta";
      cells.back().train_drop.drop_beta = true;
    }
    cells.push_back(full);
    cells.back().id = "infer-drop-gamma";
    cells.back().infer_drop.drop_gamma = true;
    cells.push_back(full);
    cells.back().id = "infer-drop-beta";
    cells.back().infer_drop.drop_beta = true;
  } else if (suite == "table4") {
    for (int depth = 1; depth <= 3; ++depth) {
      AblationCell c = full;
      c.depth = depth;
      c.id = "depth-" + std::to_string(depth);
      cells.push_back(c);
    }
  } else if (suite == "fig4") {
    std::vector<int> counts{1, 4, base.visual_tokens, 2 * base.visual_tokens};
    std::vector<int> seen;
    for (int n : counts) {
      if (std::find(seen.begin(), seen.end(), n) != seen.end()) continue;
      seen.push_back(n);
      AblationCell c = full;
      c.num_prompts = n;
      c.id = "prompts-" + std::to_string(n);
      cells.push_back(c);
    }
  } else {
    std::string valid;
    for (const auto& s : ablation_suites()) valid += (valid.empty() ? "" : ", ") + s;
    throw ConfigError("unknown ablation suite '" + std::string(suite) + "' (valid: " + valid + ")");
  }
  return cells;
}

AblationRunner::AblationRunner(ModelConfig base, TrainConfig train, Checkpoint language_model,
                               std::vector<data::DatasetRecord> train_records,
                               std::vector<data::DatasetRecord> val_records,
                               std::vector<data::DatasetRecord> test_records,
                               std::optional<std::filesystem::path> cache_dir)
    : base_(std::move(base)),
      train_(train),
      language_model_(std::move(language_model)),
      train_records_(std::move(train_records)),
      val_records_(std::move(val_records)),
      test_records_(std::move(test_records)),
      cache_dir_(std::move(cache_dir)) {
  if (test_records_.empty()) throw ad::ContractError("ablation needs a nonempty test split");
}

std::string AblationRunner::key(const AblationCell& cell, std::uint64_t seed) const {
  nlohmann::json j{{"mode", to_string(cell.mode)},
                   {"depth", cell.depth},
                   {"num_prompts", cell.num_prompts},
                   {"drop_gamma", cell.train_drop.drop_gamma},
                   {"drop_beta", cell.train_drop.drop_beta},
                   {"seed", seed},
                   {"config", base_},
                   {"train", to_json(train_)},
                   {"lm", hex64(parameter_hash(language_model_.params))},
                   {"records", train_records_.size()}};
  return hex64(fnv1a(j.dump()));
}

ReportModel& AblationRunner::trained(const AblationCell& cell, std::uint64_t seed) {
  const std::string k = key(cell, seed);
  if (auto it = models_.find(k); it != models_.end()) return *it->second;

  std::optional<std::filesystem::path> cached;
  if (cache_dir_) cached = *cache_dir_ / (k + ".ckpt");
  std::unique_ptr<ReportModel> model;
  if (cached && std::filesystem::exists(*cached)) {
    model = std::make_unique<ReportModel>(ReportModel::load(*cached));
    if (log_) log_("reusing " + cached->string());
  } else {
    ModelConfig config = base_;
    config.mode = cell.mode;
    config.param_net_depth = cell.depth;
    config.num_prompts = cell.num_prompts;
    model = std::make_unique<ReportModel>(config, data::Tokenizer::from_json(language_model_.meta.at("tokenizer")),
                                          seed, &language_model_);
    model->ablation = cell.train_drop;
    TrainConfig schedule = train_;
    schedule.seed = seed;
    if (log_) log_("training " + cell.id + " seed " + std::to_string(seed));
    auto result = cpt::train(*model, train_records_, val_records_, schedule, [this](const EpochLog& e) {
      if (log_) {
        std::ostringstream os;
        os << "  epoch " << e.epoch << " loss " << e.train_loss << " val BL4 " << e.val_bleu4;
        log_(os.str());
      }
    });
    ++trained_count_;
    if (cached) {
      std::filesystem::create_directories(*cache_dir_);
      model->save(*cached, nlohmann::json{{"best_epoch", result.best_epoch}});
    }
  }
  model->ablation = cell.train_drop;
  return *models_.emplace(k, std::move(model)).first->second;
}

AblationRow AblationRunner::run_cell(std::string_view suite, const AblationCell& cell, std::uint64_t seed) {
  ReportModel& model = trained(cell, seed);
  const PromptAblation restore = model.ablation;
  model.ablation.drop_gamma = cell.train_drop.drop_gamma || cell.infer_drop.drop_gamma;
  model.ablation.drop_beta = cell.train_drop.drop_beta || cell.infer_drop.drop_beta;
  AblationRow row{std::string(suite), cell, seed, {}, 0};
  try {
    auto ev = evaluate(model, test_records_, train_.max_len);
    row.report = ev.report;
    row.scene_accuracy = scene_accuracy(test_records_, ev.hypotheses);
  } catch (...) {
    model.ablation = restore;
    throw;
  }
  model.ablation = restore;
  return row;
}

std::vector<AblationRow> AblationRunner::run(std::string_view suite, std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  std::vector<AblationRow> rows;
  for (const auto& cell : ablation_grid(suite, base_))
    for (auto seed : seeds) rows.push_back(run_cell(suite, cell, seed));
  return rows;
}

const char* const kAblationCsvHeader =
    "suite,cell-id,mode,depth,num_prompts,drop_gamma,drop_beta,seed,BL1,BL2,BL3,BL4,RGL,MTR";

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows, bool header) {
  if (header) out << kAblationCsvHeader << '\n';
  for (const auto& r : rows) {
    const bool drop_gamma = r.cell.train_drop.drop_gamma || r.cell.infer_drop.drop_gamma;
    const bool drop_beta = r.cell.train_drop.drop_beta || r.cell.infer_drop.drop_beta;
    std::ostringstream line;
    line << std::setprecision(6) << std::fixed;
    line << r.suite << ',' << r.cell.id << ',' << to_string(r.cell.mode) << ',' << r.cell.depth << ','
         << r.cell.num_prompts << ',' << (drop_gamma ? 1 : 0) << ',' << (drop_beta ? 1 : 0) << ',' << r.seed << ','
         << r.report.bl1 << ',' << r.report.bl2 << ',' << r.report.bl3 << ',' << r.report.bl4 << ',' << r.report.rgl
         << ',' << r.report.mtr;
    out << line.str() << '\n';
  }
}

}  // namespace cpt
