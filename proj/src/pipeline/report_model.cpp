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

#include "cpt/pipeline/report_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cpt {
namespace {

double empirical_std(const Mat& m) {
  const double mean = m.mean();
  return std::sqrt((m.array() - mean).square().sum() / static_cast<double>(m.size()));
}

void copy_into(const std::vector<Parameter>& targets, const Checkpoint& checkpoint, bool take_flags) {
  for (const auto& p : targets) {
    const Parameter& src = checkpoint.at(p.name);
    if (src.tensor.shape() != p.tensor.shape())
      throw CheckpointError("parameter '" + p.name + "' has shape " + ad::to_string(src.tensor.shape()) +
                            " in the checkpoint but " + ad::to_string(p.tensor.shape()) + " in the model");
    Tensor t = p.tensor;
    t.mutable_value() = src.tensor.value();
    if (take_flags) t.set_requires_grad(src.trainable());
  }
}

}  // namespace

ReportModel::ReportModel(ModelConfig config, data::Tokenizer tokenizer, std::uint64_t seed,
                         const Checkpoint* language_model)
    : config_(std::move(config)), tokenizer_(std::move(tokenizer)) {
  config_.vocab_size = tokenizer_.size();
  config_.validate();
  Rng rng = Rng::stream(seed, "init");
  encoder = VisionEncoder(config_, rng);
  projection = Projection(config_.feature_dim, config_.d_model, rng);
  backbone = LlmBackbone(config_, rng);
  head = VocabHead(config_.d_model, config_.vocab_size, rng);
  backbone.set_trainable(false);
  head.set_trainable(false);
  if (language_model) load_language_model(*language_model);
  promptbook = Promptbook(config_.num_prompts, config_.d_model, empirical_std(backbone.token_embedding.value()), rng);
  if (config_.mode != CustomizationMode::None)
    param_net.emplace(config_.mode, config_.param_net_depth, config_.feature_dim, config_.num_prompts, rng);
}

Conditioning ReportModel::condition(const data::Image& image) const {
  Tensor features = encoder.encode(image);
  Conditioning c;
  c.visual = projection.project(features);
  c.prompts = customized_prompts(features, promptbook, param_net ? &*param_net : nullptr, config_.mode, ablation);
  return c;
}

std::vector<Parameter> ReportModel::parameters() const {
  std::vector<Parameter> out;
  auto append = [&out](std::vector<Parameter> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  append(encoder.parameters());
  append(projection.parameters());
  append(promptbook.parameters());
  if (param_net) append(param_net->parameters());
  append(frozen_parameters());
  return out;
}

std::vector<Parameter> ReportModel::trainable_parameters() const {
  std::vector<Parameter> out;
  for (auto& p : parameters())
    if (p.trainable()) out.push_back(p);
  return out;
}

std::vector<Parameter> ReportModel::frozen_parameters() const {
  std::vector<Parameter> out = backbone.parameters();
  for (auto& p : head.parameters()) out.push_back(p);
  return out;
}

void ReportModel::load_language_model(const Checkpoint& checkpoint) {
  if (checkpoint.meta.contains("tokenizer") &&
      !(data::Tokenizer::from_json(checkpoint.meta.at("tokenizer")) == tokenizer_))
    throw CheckpointError("language model was built with a different vocabulary");
  backbone.set_trainable(false);
  head.set_trainable(false);
  copy_into(frozen_parameters(), checkpoint, false);
}

nlohmann::json ReportModel::meta() const {
  nlohmann::json j;
  j["kind"] = "report_model";
  j["config"] = config_;
  j["tokenizer"] = tokenizer_.to_json();
  j["ablation"] = {{"drop_gamma", ablation.drop_gamma}, {"drop_beta", ablation.drop_beta}};
  return j;
}

void ReportModel::save(const std::filesystem::path& path, nlohmann::json extra) const {
  nlohmann::json m = meta();
  for (auto& [k, v] : extra.items()) m[k] = v;
  auto params = parameters();
  save_checkpoint(path, m, params);
}

ReportModel ReportModel::from_checkpoint(const Checkpoint& checkpoint) {
  const auto& meta = checkpoint.meta;
  if (meta.value("kind", "") != "report_model") throw CheckpointError("checkpoint does not hold a report model");
  ModelConfig config = meta.at("config").get<ModelConfig>();
  ReportModel model(config, data::Tokenizer::from_json(meta.at("tokenizer")), 0);
  auto params = model.parameters();
  if (params.size() != checkpoint.params.size())
    throw CheckpointError("checkpoint holds " + std::to_string(checkpoint.params.size()) + " parameters, model has " +
                          std::to_string(params.size()));
  copy_into(params, checkpoint, true);
  if (meta.contains("ablation")) {
    model.ablation.drop_gamma = meta["ablation"].value("drop_gamma", false);
    model.ablation.drop_beta = meta["ablation"].value("drop_beta", false);
  }
  return model;
}

ReportModel ReportModel::load(const std::filesystem::path& path) { return from_checkpoint(load_checkpoint(path)); }

std::vector<Mat> ReportModel::snapshot() const {
  std::vector<Mat> out;
  for (const auto& p : parameters()) out.push_back(p.tensor.value());
  return out;
}

void ReportModel::restore(const std::vector<Mat>& values) {
  auto params = parameters();
  if (params.size() != values.size()) throw ad::ContractError("snapshot does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) params[i].tensor.mutable_value() = values[i];
}

MixedSequence assemble(const LlmBackbone& backbone, const Tensor& visual, const Tensor& prompts,
                       std::span<const int> text_ids) {
  if (text_ids.empty() || text_ids.front() != data::Tokenizer::kBos)
    throw ad::ContractError("text segment must start with BOS");
  MixedSequence seq;
  seq.layout = {visual.rows(), prompts.rows(), static_cast<Index>(text_ids.size())};
  if (seq.layout.total() > backbone.max_positions())
    throw LengthError("mixed sequence of " + std::to_string(seq.layout.total()) + " tokens exceeds K_max=" +
                      std::to_string(backbone.max_positions()));
  seq.z = ad::concat({visual, prompts, backbone.embed(text_ids)}, 0);
  return seq;
}

TeacherTargets teacher_targets(const SequenceLayout& layout, std::span<const int> ids) {
  if (static_cast<Index>(ids.size()) != layout.text + 1)
    throw ad::ContractError("teacher forcing needs one more id than text positions");
  TeacherTargets t;
  t.targets.assign(static_cast<std::size_t>(layout.total()), 0);
  t.mask.assign(static_cast<std::size_t>(layout.total()), false);
  for (Index j = 0; j < layout.text; ++j) {
    t.targets[static_cast<std::size_t>(layout.prefix() + j)] = ids[static_cast<std::size_t>(j + 1)];
    t.mask[static_cast<std::size_t>(layout.prefix() + j)] = true;
  }
  return t;
}

std::vector<int> training_ids(const ReportModel& model, const std::string& report, int max_report_tokens,
                              bool* truncated) {
  const auto& c = model.config();
  const int limit = std::min(max_report_tokens, c.max_positions - c.visual_tokens - c.num_prompts + 1);
  if (limit < 2) throw LengthError("no room for report tokens after the visual and prompt segments");
  std::vector<int> ids = model.tokenizer().encode(report);
  const bool cut = static_cast<int>(ids.size()) > limit;
  if (cut) ids.resize(static_cast<std::size_t>(limit));
  if (truncated) *truncated = cut;
  return ids;
}

Tensor record_loss(const ReportModel& model, const data::Image& image, std::span<const int> ids, Tensor* logits) {
  if (ids.size() < 2) throw ad::ContractError("a training report needs at least BOS and one target");
  Conditioning c = model.condition(image);
  MixedSequence seq = assemble(model.backbone, c.visual, c.prompts, ids.first(ids.size() - 1));
  Tensor out = model.head.logits(model.backbone.forward(seq.z));
  TeacherTargets t = teacher_targets(seq.layout, ids);
  if (logits) *logits = out;
  return ad::cross_entropy(out, t.targets, t.mask);
}

std::string_view to_string(Termination t) { return t == Termination::Eos ? "eos" : "max_len"; }

int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (int i = 1; i < row.size(); ++i)
    if (row(i) > row(best)) best = i;
  return best;
}

namespace {

int generation_budget(const ReportModel& model, int max_len) {
  if (max_len < 1) throw ad::ContractError("max_len must be at least 1");
  const auto& c = model.config();
  const int room = c.max_positions - c.visual_tokens - c.num_prompts;
  if (room < 1) throw LengthError("no room to generate after the visual and prompt segments");
  return std::min(max_len, room);
}

// Appends the choice for one step; returns true when decoding should stop.
bool take_step(const Eigen::RowVectorXd& logits, int budget, GenerationResult& out) {
  const int id = argmax(logits);
  double runner_up = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < logits.size(); ++i)
    if (i != id) runner_up = std::max(runner_up, logits(i));
  out.ids.push_back(id);
  out.margins.push_back(logits(id) - runner_up);
  if (id == data::Tokenizer::kEos) {
    out.terminated_by = Termination::Eos;
    return true;
  }
  if (static_cast<int>(out.ids.size()) - 1 >= budget) {
    out.terminated_by = Termination::MaxLen;
    return true;
  }
  return false;
}

}  // namespace

GenerationResult generate(const ReportModel& model, const data::Image& image, int max_len) {
  const int budget = generation_budget(model, max_len);
  NoGradScope no_grad;
  Conditioning c = model.condition(image);
  const Mat& table = model.backbone.token_embedding.value();
  const Mat& w = model.head.weight.value();
  const Eigen::RowVectorXd b = model.head.bias.value().row(0);

  DecoderCache cache(model.backbone);
  Mat first(c.visual.rows() + c.prompts.rows() + 1, table.cols());
  first << c.visual.value(), c.prompts.value(), table.row(data::Tokenizer::kBos);
  Mat hidden = cache.extend(first);

  GenerationResult out;
  out.ids.push_back(data::Tokenizer::kBos);
  while (true) {
    Eigen::RowVectorXd logits = hidden.bottomRows(1) * w + b;
    if (take_step(logits, budget, out)) break;
    hidden = cache.extend(table.row(out.ids.back()));
  }
  out.text = model.tokenizer().decode(out.ids);
  return out;
}

GenerationResult generate_reference(const ReportModel& model, const data::Image& image, int max_len) {
  const int budget = generation_budget(model, max_len);
  NoGradScope no_grad;
  Conditioning c = model.condition(image);
  GenerationResult out;
  out.ids.push_back(data::Tokenizer::kBos);
  while (true) {
    MixedSequence seq = assemble(model.backbone, c.visual, c.prompts, out.ids);
    Tensor hidden = model.backbone.forward(seq.z);
    Tensor last = ad::slice(hidden, 0, hidden.rows() - 1, 1);
    Eigen::RowVectorXd logits = model.head.logits(last).value().row(0);
    if (take_step(logits, budget, out)) break;
  }
  out.text = model.tokenizer().decode(out.ids);
  return out;
}

}  // namespace cpt
