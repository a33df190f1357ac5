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

#include "cpt/pipeline/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "cpt/data/scene.hpp"

namespace cpt {
namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct PreparedRecord {
  const data::DatasetRecord* record;
  std::vector<int> ids;
};

std::vector<PreparedRecord> prepare(const ReportModel& model, std::span<const data::DatasetRecord* const> batch,
                                    int max_report_tokens, TrainCounters* counters) {
  std::vector<PreparedRecord> out;
  for (const auto* r : batch) {
    bool cut = false;
    out.push_back({r, training_ids(model, r->report, max_report_tokens, &cut)});
    if (cut && counters) ++counters->truncated_reports;
  }
  return out;
}

std::size_t supervised(const std::vector<PreparedRecord>& batch) {
  std::size_t n = 0;
  for (const auto& p : batch) n += p.ids.size() - 1;
  return n;
}

}  // namespace

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"epochs", c.epochs},
          {"max_report_tokens", c.max_report_tokens}, {"seed", c.seed}, {"max_len", c.max_len},
          {"val_limit", c.val_limit}, {"cosine_decay", c.cosine_decay}};
}

double train_step(ReportModel& model, std::span<const data::DatasetRecord* const> batch, AdamState& optimizer,
                  int max_report_tokens, TrainCounters& counters) {
  if (batch.empty()) throw ad::ContractError("empty training batch");
  auto prepared = prepare(model, batch, max_report_tokens, &counters);
  const double total = static_cast<double>(supervised(prepared));
  auto params = model.trainable_parameters();
  ad::zero_grad<Scalar>(params);
  double loss = 0;
  for (const auto& p : prepared) {
    Tape tape;
    TapeScope scope(tape);
    const double weight = static_cast<double>(p.ids.size() - 1) / total;
    Tensor l = record_loss(model, p.record->image, p.ids) * weight;
    loss += l.item();
    tape.backward(l);
  }
  ad::adam_step<Scalar>(params, optimizer);
  ++counters.steps;
  return loss;
}

double batch_loss(const ReportModel& model, std::span<const data::DatasetRecord* const> batch,
                  int max_report_tokens) {
  if (batch.empty()) throw ad::ContractError("empty batch");
  NoGradScope no_grad;
  auto prepared = prepare(model, batch, max_report_tokens, nullptr);
  const double total = static_cast<double>(supervised(prepared));
  double loss = 0;
  for (const auto& p : prepared)
    loss += record_loss(model, p.record->image, p.ids).item() * static_cast<double>(p.ids.size() - 1) / total;
  return loss;
}

TrainResult train(ReportModel& model, const std::vector<data::DatasetRecord>& train_records,
                  const std::vector<data::DatasetRecord>& val_records, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  if (train_records.empty()) throw ad::ContractError("empty train split");
  if (config.batch_size < 1 || config.epochs < 1 || config.learning_rate <= 0)
    throw ConfigError("batch size, epochs and learning rate must be positive");
  AdamState optimizer;
  optimizer.options.learning_rate = config.learning_rate;
  Rng shuffle = Rng::stream(config.seed, "shuffle");

  std::vector<const data::DatasetRecord*> order;
  for (const auto& r : train_records) order.push_back(&r);
  std::vector<data::DatasetRecord> val(val_records.begin(),
                                       config.val_limit > 0 && config.val_limit < static_cast<int>(val_records.size())
                                           ? val_records.begin() + config.val_limit
                                           : val_records.end());

  TrainResult result;
  result.initial_loss =
      batch_loss(model, std::span(order).first(std::min<std::size_t>(order.size(), config.batch_size)),
                 config.max_report_tokens);
  std::vector<Mat> best;
  const std::size_t steps_per_epoch = (order.size() + config.batch_size - 1) / config.batch_size;
  const double total_steps = static_cast<double>(steps_per_epoch * config.epochs);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    shuffle.shuffle(std::span(order));
    double loss_sum = 0;
    int batches = 0;
    for (std::size_t i = 0; i < order.size(); i += config.batch_size) {
      auto batch = std::span(order).subspan(i, std::min<std::size_t>(config.batch_size, order.size() - i));
      if (config.cosine_decay)
        optimizer.options.learning_rate =
            config.learning_rate * 0.5 * (1 + std::cos(M_PI * static_cast<double>(optimizer.step) / total_steps));
      loss_sum += train_step(model, batch, optimizer, config.max_report_tokens, result.counters);
      ++batches;
    }
    EpochLog log{epoch, loss_sum / batches, 0.0, 0.0};
    if (!val.empty()) {
      log.val_bleu4 = evaluate(model, val, config.max_len).report.bl4;
      if (log.val_bleu4 > result.best_val_bleu4) {
        result.best_val_bleu4 = log.val_bleu4;
        result.best_epoch = epoch;
        best = model.snapshot();
      }
    }
    log.seconds = seconds_since(start);
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  if (!best.empty()) model.restore(best);
  return result;
}

EvalResult evaluate_with(const std::vector<data::DatasetRecord>& records,
                         const std::function<std::string(const data::DatasetRecord&)>& hypothesize) {
  if (records.empty()) throw ad::ContractError("cannot evaluate an empty split");
  EvalResult out;
  for (const auto& r : records) {
    out.hypotheses.push_back(hypothesize(r));
    out.references.push_back(r.report);
  }
  out.report = metrics::score_corpus(out.hypotheses, out.references);
  return out;
}

EvalResult evaluate(const ReportModel& model, const std::vector<data::DatasetRecord>& records, int max_len) {
  return evaluate_with(records,
                       [&](const data::DatasetRecord& r) { return generate(model, r.image, max_len).text; });
}

double scene_accuracy(const std::vector<data::DatasetRecord>& records, std::span<const std::string> hypotheses) {
  if (records.size() != hypotheses.size()) throw ad::ContractError("one hypothesis per record required");
  int scored = 0, correct = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].scene) continue;
    ++scored;
    auto parsed = data::parse_report(hypotheses[i]);
    if (parsed && parsed->same_shapes(*records[i].scene)) ++correct;
  }
  if (scored == 0) throw ad::ContractError("no records carry a scene");
  return static_cast<double>(correct) / scored;
}

LanguageModel::LanguageModel(ModelConfig cfg, data::Tokenizer tok, std::uint64_t seed)
    : config(std::move(cfg)), tokenizer(std::move(tok)) {
  config.vocab_size = tokenizer.size();
  config.validate();
  Rng rng = Rng::stream(seed, "lm-init");
  backbone = LlmBackbone(config, rng);
  head = VocabHead(config.d_model, config.vocab_size, rng);
}

std::vector<Parameter> LanguageModel::parameters() const {
  std::vector<Parameter> out = backbone.parameters();
  for (auto& p : head.parameters()) out.push_back(p);
  return out;
}

void LanguageModel::freeze() {
  backbone.set_trainable(false);
  head.set_trainable(false);
}

nlohmann::json LanguageModel::meta() const {
  return {{"kind", "language_model"}, {"config", config}, {"tokenizer", tokenizer.to_json()}};
}

Checkpoint LanguageModel::checkpoint() const { return {meta(), parameters()}; }

void LanguageModel::save(const std::filesystem::path& path, nlohmann::json extra) const {
  nlohmann::json m = meta();
  for (auto& [k, v] : extra.items()) m[k] = v;
  auto params = parameters();
  save_checkpoint(path, m, params);
}

Tensor lm_loss(const LanguageModel& lm, std::span<const int> ids, Index offset) {
  if (ids.size() < 2) throw ad::ContractError("a report needs at least BOS and one target");
  auto inputs = ids.first(ids.size() - 1);
  Tensor logits = lm.head.logits(lm.backbone.forward(lm.backbone.embed(inputs), offset));
  return ad::cross_entropy(logits, ids.subspan(1), std::vector<bool>(inputs.size(), true));
}

double perplexity(const LanguageModel& lm, std::span<const std::string> reports, Index offset) {
  if (reports.empty()) throw ad::ContractError("perplexity of an empty corpus");
  NoGradScope no_grad;
  double nll = 0, tokens = 0;
  for (const auto& r : reports) {
    auto ids = lm.tokenizer.encode(r);
    const double n = static_cast<double>(ids.size() - 1);
    nll += lm_loss(lm, ids, offset).item() * n;
    tokens += n;
  }
  return std::exp(nll / tokens);
}

int lm_next_token(const LanguageModel& lm, std::span<const int> ids, Index offset) {
  NoGradScope no_grad;
  Tensor hidden = lm.backbone.forward(lm.backbone.embed(ids), offset);
  Tensor logits = lm.head.logits(ad::slice(hidden, 0, hidden.rows() - 1, 1));
  return argmax(logits.value().row(0));
}

nlohmann::json to_json(const LmPretrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"context_rate", c.context_rate}};
}

std::vector<int> shuffled_context(const data::Tokenizer& tokenizer, std::span<const int> ids, Rng& rng) {
  const int period = tokenizer.id(".");
  std::vector<std::vector<int>> sentences(1);
  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (ids[i] == data::Tokenizer::kEos) break;
    sentences.back().push_back(ids[i]);
    if (ids[i] == period) sentences.emplace_back();
  }
  // Drop the trailing partial sentence and the closing clause.
  sentences.pop_back();
  if (!sentences.empty()) sentences.pop_back();
  rng.shuffle(std::span(sentences));
  std::vector<int> out;
  for (const auto& s : sentences) out.insert(out.end(), s.begin(), s.end());
  return out;
}

PretrainResult pretrain_language_model(const ModelConfig& config, const data::Tokenizer& tokenizer,
                                       const std::vector<std::string>& train_reports,
                                       const std::vector<std::string>& heldout_reports, const LmPretrainConfig& lm,
                                       const std::function<void(int, double)>& on_epoch) {
  if (train_reports.empty()) throw ad::ContractError("empty pretraining corpus");
  PretrainResult result{LanguageModel(config, tokenizer, lm.seed), {}, 0, 0};
  LanguageModel& model = result.model;
  const Index eval_offset = config.visual_tokens + config.num_prompts;
  const auto& held = heldout_reports.empty() ? train_reports : heldout_reports;
  result.baseline_perplexity = perplexity(model, held, eval_offset);

  std::vector<std::vector<int>> corpus;
  for (const auto& r : train_reports) {
    corpus.push_back(tokenizer.encode(r));
    if (static_cast<int>(corpus.back().size()) - 1 > config.max_positions)
      throw LengthError("report longer than K_max");
  }
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle = Rng::stream(lm.seed, "lm-shuffle");
  Rng offsets = Rng::stream(lm.seed, "lm-offsets");
  Rng contexts = Rng::stream(lm.seed, "lm-context");
  AdamState optimizer;
  optimizer.options.learning_rate = lm.learning_rate;
  auto params = model.parameters();

  for (int epoch = 1; epoch <= lm.epochs; ++epoch) {
    shuffle.shuffle(std::span(order));
    double loss_sum = 0;
    int batches = 0;
    for (std::size_t i = 0; i < order.size(); i += lm.batch_size) {
      const std::size_t end = std::min(order.size(), i + lm.batch_size);
      double total = 0;
      for (std::size_t k = i; k < end; ++k) total += static_cast<double>(corpus[order[k]].size() - 1);
      ad::zero_grad<Scalar>(params);
      double loss = 0;
      for (std::size_t k = i; k < end; ++k) {
        const auto& ids = corpus[order[k]];
        const int scored = static_cast<int>(ids.size()) - 1;
        std::vector<int> seq;
        if (lm.context_rate > 0 && contexts.uniform() < lm.context_rate) {
          seq = shuffled_context(tokenizer, ids, contexts);
          // Contexts that would not fit before the report are skipped.
          if (static_cast<int>(seq.size() + ids.size()) - 1 > config.max_positions) seq.clear();
        }
        const int context = static_cast<int>(seq.size());
        seq.insert(seq.end(), ids.begin(), ids.end());
        const int inputs = static_cast<int>(seq.size()) - 1;
        const Index offset = offsets.uniform_int(0, config.max_positions - inputs);
        Tape tape;
        TapeScope scope(tape);
        std::vector<bool> mask(inputs, true);
        std::fill(mask.begin(), mask.begin() + context, false);
        std::span<const int> all(seq);
        Tensor logits = model.head.logits(model.backbone.forward(model.backbone.embed(all.first(inputs)), offset));
        Tensor l = ad::cross_entropy(logits, all.subspan(1), mask) * (static_cast<double>(scored) / total);
        loss += l.item();
        tape.backward(l);
      }
      ad::adam_step<Scalar>(params, optimizer);
      loss_sum += loss;
      ++batches;
    }
    result.epoch_loss.push_back(loss_sum / batches);
    if (on_epoch) on_epoch(epoch, loss_sum / batches);
  }
  model.freeze();
  result.heldout_perplexity = perplexity(model, held, eval_offset);
  return result;
}

}  // namespace cpt
