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

// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and run
// sizes are fixed here. `--smoke` shrinks the desk runs to check wiring only
// and prints SMOKE instead of a verdict for the run-dependent criteria.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "cpt/checkpoint.hpp"
#include "cpt/data/dataset.hpp"
#include "cpt/metrics/metrics.hpp"
#include "cpt/pipeline/ablation.hpp"
#include "cpt/pipeline/training.hpp"
#include "metric_examples.hpp"
#include "pipeline_fixture.hpp"

namespace cpt {
namespace {

using Clock = std::chrono::steady_clock;

constexpr double kGradTolerance = 1e-4;
constexpr double kGradPassRate = 0.99;
constexpr double kGradSeconds = 120;
constexpr int kGradSeeds = 5;
constexpr double kTable2Minutes = 45;
constexpr double kMetricTolerance = 1e-9;
constexpr int kGenerationImages = 100;
constexpr double kTrainedSceneAccuracy = 0.70;
constexpr double kUntrainedSceneAccuracy = 0.10;
const std::vector<std::uint64_t> kSeeds{0, 1, 2};

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << v;
  return os.str();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

class Suite {
 public:
  explicit Suite(bool smoke) : smoke_(smoke) {}

  void report(int id, const std::string& name, const Verdict& v, bool run_dependent = false) {
    const bool smoke_only = smoke_ && run_dependent;
    const char* tag = smoke_only ? "SMOKE" : v.pass ? "PASS" : "FAIL";
    if (!smoke_only && !v.pass) ++failures_;
    std::cout << tag << " criterion-" << id << " " << name << ": " << v.detail << std::endl;
  }

  void guard(int id, const std::string& name, const std::function<Verdict()>& body, bool run_dependent = false) {
    try {
      report(id, name, body(), run_dependent);
    } catch (const std::exception& e) {
      report(id, name, {false, std::string("threw ") + e.what()}, false);
    }
  }

  int failures() const { return failures_; }

 private:
  bool smoke_;
  int failures_ = 0;
};

Verdict gradient_fidelity() {
  const auto start = Clock::now();
  std::map<std::string, testing::GradCheck> groups;
  for (int seed = 0; seed < kGradSeeds; ++seed)
    for (const auto& g : testing::tiny_loss_gradient_check(seed, kGradTolerance)) {
      auto& acc = groups[g.group];
      acc.coordinates += g.check.coordinates;
      acc.failures += g.check.failures;
      acc.worst = std::max(acc.worst, g.check.worst);
    }
  const double secs = seconds_since(start);
  bool pass = secs < kGradSeconds;
  std::ostringstream os;
  for (const auto& [name, c] : groups) {
    pass = pass && c.coordinates > 0 && c.pass_rate() >= kGradPassRate;
    os << name << " " << c.coordinates - c.failures << "/" << c.coordinates << " ";
  }
  os << "within rel. error " << kGradTolerance << " over " << kGradSeeds << " seeds in " << fmt(secs, 1) << "s";
  return {pass, os.str()};
}

Verdict identity_equivalence() {
  int compared = 0;
  bool pass = true;
  for (const ModelConfig& base : {tiny_config(), ModelConfig{}}) {
    data::Tokenizer tok = testing::tiny_tokenizer();
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      ModelConfig config = base;
      config.mode = CustomizationMode::None;
      ReportModel none(config, tok, seed);
      Rng rng = Rng::stream(seed, "identity");
      data::Image img = testing::random_image(config.image, rng);
      auto ids = testing::random_report_ids(tok.size(), 8, rng);
      Tensor ref;
      record_loss(none, img, ids, &ref);
      const auto ref_gen = generate(none, img, 20).ids;
      for (auto mode : {CustomizationMode::PromptWise, CustomizationMode::BookWise}) {
        config.mode = mode;
        ReportModel m(config, tok, seed);
        m.promptbook.book.mutable_value() = none.promptbook.book.value();
        Tensor logits;
        record_loss(m, img, ids, &logits);
        pass = pass && logits.value() == ref.value() && generate(m, img, 20).ids == ref_gen;
        ++compared;
      }
    }
  }
  return {pass, std::to_string(compared) + " zero-head models bit-identical to mode none (logits and greedy ids)"};
}

Verdict metric_oracles() {
  int examples = 0, bad = 0;
  std::string first_bad;
  for (const auto& ex : testing::metric_examples()) {
    metrics::MetricReport r = metrics::score_corpus(ex.hypotheses, ex.references);
    ++examples;
    if (std::abs(ex.pick(r) - ex.expected) > kMetricTolerance) {
      if (!bad++) first_bad = ex.name;
    }
  }
  Rng rng(17);
  int identity_bad = 0, lcs_bad = 0, lcs_cases = 0;
  auto sentence = [&](int lo, int hi) {
    const int n = rng.uniform_int(lo, hi);
    std::vector<std::string> words;
    for (int i = 0; i < n; ++i) words.push_back(std::string(1, static_cast<char>('a' + rng.uniform_int(0, 4))));
    return words;
  };
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> refs;
    for (int i = 0; i < 4; ++i) {
      auto w = sentence(4, 12);
      std::string s;
      for (std::size_t j = 0; j < w.size(); ++j) s += (j ? " " : "") + w[j];
      refs.push_back(s);
    }
    auto r = metrics::score_corpus(refs, refs);
    if (r.bl1 != 1.0 || r.bl2 != 1.0 || r.bl3 != 1.0 || r.bl4 != 1.0 || r.rgl != 1.0) ++identity_bad;
  }
  for (int trial = 0; trial < 3000; ++trial) {
    auto a = sentence(0, 8), b = sentence(0, 8);
    std::size_t best = 0;
    for (unsigned mask = 0; mask < (1u << a.size()); ++mask) {
      std::vector<std::string> sub;
      for (std::size_t i = 0; i < a.size(); ++i)
        if (mask & (1u << i)) sub.push_back(a[i]);
      std::size_t j = 0;
      for (std::size_t i = 0; i < b.size() && j < sub.size(); ++i)
        if (b[i] == sub[j]) ++j;
      if (j == sub.size()) best = std::max(best, sub.size());
    }
    ++lcs_cases;
    if (metrics::lcs_length(a, b) != best) ++lcs_bad;
  }
  std::ostringstream os;
  os << examples - bad << "/" << examples << " hand examples within " << kMetricTolerance;
  if (bad) os << " (first mismatch " << first_bad << ")";
  os << "; identity corpora " << 50 - identity_bad << "/50 exact 1.0; LCS oracle " << lcs_cases - lcs_bad << "/"
     << lcs_cases;
  return {bad == 0 && identity_bad == 0 && lcs_bad == 0, os.str()};
}

struct DeskRun {
  data::Tokenizer tokenizer;
  Checkpoint lm;
  std::vector<data::DatasetRecord> train, val, test;
  std::unique_ptr<AblationRunner> runner;
  std::vector<AblationRow> table2;
  double table2_seconds = 0;
  double lm_perplexity = 0, lm_baseline = 0;
};

AblationCell cell_for(const ModelConfig& base, CustomizationMode mode) {
  for (const auto& c : ablation_grid("table2", base))
    if (c.mode == mode) return c;
  throw std::logic_error("no table2 cell");
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace
}  // namespace cpt

int main(int argc, char** argv) {
  using namespace cpt;
  const bool smoke = argc > 1 && std::strcmp(argv[1], "--smoke") == 0;
  Suite suite(smoke);
  std::cout << (smoke ? "acceptance suite (smoke run: desk criteria shrunk, not a verdict)\n" : "acceptance suite\n");

  suite.guard(1, "gradient-fidelity", gradient_fidelity);
  suite.guard(2, "identity-transform-equivalence", identity_equivalence);
  suite.guard(8, "metric-oracles", metric_oracles);

  // Desk runs shared by criteria 3-7, 9 and 10.
  DeskRun desk;
  ModelConfig base;
  TrainConfig schedule;
  LmPretrainConfig lm_config;
  data::SyntheticConfig data_config;
  if (smoke) {
    data_config.n_train = 60;
    data_config.n_val = 10;
    data_config.n_test = 20;
    schedule.epochs = 1;
    lm_config.epochs = 1;
  }
  bool desk_ok = true;
  std::string desk_error;
  try {
    const auto start = Clock::now();
    auto records = data::generate_dataset(data_config);
    desk.train = data::filter_split(records, data::Split::Train);
    desk.val = data::filter_split(records, data::Split::Val);
    desk.test = data::filter_split(records, data::Split::Test);
    std::vector<std::string> train_reports, val_reports;
    for (const auto& r : desk.train) train_reports.push_back(r.report);
    for (const auto& r : desk.val) val_reports.push_back(r.report);
    desk.tokenizer = data::Tokenizer::build(train_reports);
    auto lm = pretrain_language_model(base, desk.tokenizer, train_reports, val_reports, lm_config);
    desk.lm = lm.model.checkpoint();
    desk.lm_perplexity = lm.heldout_perplexity;
    desk.lm_baseline = lm.baseline_perplexity;
    std::cout << "  language model: held-out perplexity " << fmt(lm.heldout_perplexity) << " vs random-init "
              << fmt(lm.baseline_perplexity) << " (" << fmt(seconds_since(start), 1) << "s)" << std::endl;
    desk.runner = std::make_unique<AblationRunner>(base, schedule, desk.lm, desk.train, desk.val, desk.test);
    desk.runner->set_log([](const std::string& line) {
      if (line.rfind("training", 0) == 0) std::cout << "  " << line << std::endl;
    });
    desk.table2 = desk.runner->run("table2", kSeeds);
    desk.table2_seconds = seconds_since(start);
  } catch (const std::exception& e) {
    desk_ok = false;
    desk_error = e.what();
  }
  auto need_desk = [&] {
    if (!desk_ok) throw std::runtime_error("desk runs failed: " + desk_error);
  };

  suite.guard(3, "frozen-backbone-conservation", [&]() -> Verdict {
    need_desk();
    const auto lm_hash = parameter_hash(desk.lm.params);
    int models = 0, frozen_same = 0, trainable_changed = 0;
    for (const auto& row : desk.table2) {
      ReportModel& trained = desk.runner->trained(row.cell, row.seed);
      ModelConfig config = trained.config();
      ReportModel init(config, desk.tokenizer, row.seed, &desk.lm);
      ++models;
      frozen_same += parameter_hash(trained.frozen_parameters()) == lm_hash;
      trainable_changed += parameter_hash(trained.trainable_parameters()) !=
                           parameter_hash(init.trainable_parameters());
    }
    return {models > 0 && frozen_same == models && trainable_changed == models,
            std::to_string(frozen_same) + "/" + std::to_string(models) + " backbone hashes equal the LM checkpoint; " +
                std::to_string(trainable_changed) + "/" + std::to_string(models) + " trainable hashes changed"};
  });

  suite.guard(
      4, "table2-directional-mirror",
      [&]() -> Verdict {
        need_desk();
        std::map<CustomizationMode, std::vector<double>> bl4;
        for (const auto& row : desk.table2) bl4[row.cell.mode].push_back(row.report.bl4);
        const double none = median(bl4[CustomizationMode::None]);
        const double pw = median(bl4[CustomizationMode::PromptWise]);
        const double bw = median(bl4[CustomizationMode::BookWise]);
        const double minutes = desk.table2_seconds / 60;
        std::ostringstream os;
        os << "median test BLEU-4 prompt_wise " << fmt(pw) << " book_wise " << fmt(bw) << " none " << fmt(none)
           << "; " << fmt(minutes, 1) << " min for LM + 9 runs (limit " << kTable2Minutes << ")";
        return {pw >= bw && bw >= none && pw - none > 0 && minutes < kTable2Minutes, os.str()};
      },
      true);

  std::vector<std::uint64_t> seed0{0};
  suite.guard(
      5, "table3-inference-mirror",
      [&]() -> Verdict {
        need_desk();
        auto rows = desk.runner->run("table3-inference", seed0);
        std::map<std::string, double> bl1;
        for (const auto& r : rows) bl1[r.cell.id] = r.report.bl1;
        const double full = bl1.at("full"), g = bl1.at("infer-drop-gamma"), b = bl1.at("infer-drop-beta");
        std::ostringstream os;
        os << "BLEU-1 full " << fmt(full) << " drop-gamma " << fmt(g) << " (" << fmt(100 * (full - g) / full, 1)
           << "% drop) drop-beta " << fmt(b) << " (" << fmt(100 * (full - b) / full, 1) << "% drop)";
        return {g < b && g < full && b < full, os.str()};
      },
      true);

  suite.guard(
      6, "table4-execution",
      [&]() -> Verdict {
        need_desk();
        auto rows = desk.runner->run("table4", seed0);
        std::ostringstream csv;
        write_ablation_csv(csv, rows, false);
        std::ostringstream os;
        os << rows.size() << " CSV rows;";
        for (const auto& r : rows) os << " depth " << r.cell.depth << " BL4 " << fmt(r.report.bl4);
        const std::string text = csv.str();
        std::cout << text;
        return {rows.size() == 3 && std::count(text.begin(), text.end(), '\n') == 3, os.str()};
      },
      true);

  suite.guard(
      7, "fig4-execution",
      [&]() -> Verdict {
        need_desk();
        auto rows = desk.runner->run("fig4", seed0);
        bool has_m = false;
        std::ostringstream os;
        os << rows.size() << " rows;";
        for (const auto& r : rows) {
          has_m = has_m || r.cell.num_prompts == base.visual_tokens;
          os << " N=" << r.cell.num_prompts << " BL4 " << fmt(r.report.bl4);
        }
        std::ostringstream csv;
        write_ablation_csv(csv, rows, false);
        std::cout << csv.str();
        return {rows.size() == 4 && has_m, os.str()};
      },
      true);

  suite.guard(
      9, "generation-contract",
      [&]() -> Verdict {
        need_desk();
        ReportModel& model = desk.runner->trained(cell_for(base, CustomizationMode::PromptWise), 0);
        const int n = std::min<int>(kGenerationImages, static_cast<int>(desk.test.size()));
        int ok = 0, eos = 0;
        for (int i = 0; i < n; ++i) {
          const auto& img = desk.test[i].image;
          GenerationResult a = generate(model, img, schedule.max_len);
          GenerationResult b = generate(model, img, schedule.max_len);
          GenerationResult ref = generate_reference(model, img, schedule.max_len);
          const int generated = static_cast<int>(a.ids.size()) - 1;
          bool good = a.ids == b.ids && a.ids == ref.ids && generated >= 1 && generated <= schedule.max_len &&
                      a.ids.front() == data::Tokenizer::kBos;
          for (std::size_t k = 1; k + 1 < a.ids.size(); ++k) good = good && a.ids[k] != data::Tokenizer::kEos;
          ok += good;
          eos += a.terminated_by == Termination::Eos;
        }
        return {ok == n && n > 0, std::to_string(ok) + "/" + std::to_string(n) +
                                      " test images deterministic, bounded and equal to the full-recompute reference (" +
                                      std::to_string(eos) + " ended on EOS)"};
      },
      true);

  suite.guard(
      10, "conditional-generation-sanity",
      [&]() -> Verdict {
        need_desk();
        const AblationCell cell = cell_for(base, CustomizationMode::PromptWise);
        double trained = 0;
        for (const auto& row : desk.table2)
          if (row.cell.mode == CustomizationMode::PromptWise && row.seed == 0) trained = row.scene_accuracy;
        ModelConfig config = base;
        config.mode = cell.mode;
        ReportModel untrained(config, desk.tokenizer, 0, &desk.lm);
        auto ev = evaluate(untrained, desk.test, schedule.max_len);
        const double before = scene_accuracy(desk.test, ev.hypotheses);
        std::vector<double> all;
        for (const auto& row : desk.table2) all.push_back(row.scene_accuracy);
        std::ostringstream os;
        os << "prompt_wise seed 0 reconstructs " << fmt(100 * trained, 1) << "% of test scenes (untrained "
           << fmt(100 * before, 1) << "%); all table2 runs:";
        for (const auto& row : desk.table2)
          os << " " << to_string(row.cell.mode) << "/" << row.seed << "=" << fmt(100 * row.scene_accuracy, 1) << "%";
        return {trained >= kTrainedSceneAccuracy && before <= kUntrainedSceneAccuracy, os.str()};
      },
      true);

  if (desk_ok) {
    std::ostringstream csv;
    write_ablation_csv(csv, desk.table2);
    std::cout << csv.str();
  }
  std::cout << (suite.failures() ? "acceptance: " + std::to_string(suite.failures()) + " criteria failed\n"
                                 : std::string("acceptance: all criteria passed\n"));
  return suite.failures() ? 1 : 0;
}
