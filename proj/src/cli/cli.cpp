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

#include "cpt/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cpt/checkpoint.hpp"
#include "cpt/data/dataset.hpp"
#include "cpt/data/scene.hpp"
#include "cpt/pipeline/ablation.hpp"
#include "cpt/pipeline/training.hpp"

namespace cpt::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

/// Bad flags, bad config, or unusable paths: exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string utc_stamp(const char* format) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, format);
  return os.str();
}

fs::path run_dir(const std::string& flag, std::uint64_t seed) {
  fs::path dir = flag.empty() ? fs::path("runs") / (utc_stamp("%Y%m%d-%H%M%S") + "-seed" + std::to_string(seed))
                              : fs::path(flag);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory " + dir.string());
  std::ofstream probe(dir / ".write-test");
  if (!probe) throw UsageError("output directory " + dir.string() + " is not writable");
  probe.close();
  fs::remove(dir / ".write-test", ec);
  return dir;
}

struct DataSource {
  fs::path path;
  std::optional<fs::path> root;

  std::vector<data::DatasetRecord> load() const { return data::load_dataset(path, root); }
};

DataSource data_source(const std::string& flag, const std::string& data_dir) {
  std::string path = flag;
  if (path.empty()) {
    if (const char* env = std::getenv(kDataEnv)) path = env;
  }
  if (path.empty()) throw UsageError(std::string("--data is required (or set ") + kDataEnv + ")");
  if (!fs::exists(path)) throw UsageError("missing data: " + path + " does not exist");
  if (!data_dir.empty() && !fs::is_directory(data_dir)) throw UsageError("--data-dir " + data_dir + " is not a directory");
  return {path, data_dir.empty() ? std::nullopt : std::optional<fs::path>(data_dir)};
}

std::vector<data::DatasetRecord> load_split(const DataSource& source, data::Split split) {
  auto records = data::filter_split(source.load(), split);
  if (records.empty())
    throw UsageError("empty " + std::string(data::to_string(split)) + " split in " + source.path.string());
  return records;
}

json read_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config file " + path + " is not valid JSON: " + e.what());
  }
}

void write_json_atomic(const fs::path& path, const json& j) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

struct Manifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  json outputs = json::object();
  json timings = json::object();
  json extra = json::object();

  void write(const fs::path& dir) const {
    json j{{"command", command},     {"version", kVersion}, {"config", config}, {"seed", seed},
           {"outputs", outputs},     {"timings", timings},  {"finished_at", utc_stamp("%Y-%m-%dT%H:%M:%SZ")}};
    for (auto& [k, v] : extra.items()) j[k] = v;
    write_json_atomic(dir / "run_manifest.json", j);
  }
};

/// Training schedule from the config file's "train" object, then flags.
void merge_train(const json& j, TrainConfig& t) {
  if (!j.contains("train")) return;
  const json& s = j.at("train");
  t.learning_rate = s.value("learning_rate", t.learning_rate);
  t.batch_size = s.value("batch_size", t.batch_size);
  t.epochs = s.value("epochs", t.epochs);
  t.max_report_tokens = s.value("max_report_tokens", t.max_report_tokens);
  t.max_len = s.value("max_len", t.max_len);
  t.val_limit = s.value("val_limit", t.val_limit);
}

Checkpoint load_language_model(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("missing language model checkpoint " + path);
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "language_model")
    throw UsageError(path + " is not a language model checkpoint");
  return ckpt;
}

ReportModel load_model(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("missing checkpoint " + path);
  return ReportModel::load(path);
}

json generation_json(const GenerationResult& g) {
  return {{"ids", g.ids}, {"text", g.text}, {"margins", g.margins}, {"terminated_by", to_string(g.terminated_by)}};
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string out;
  int n_train = 2000, n_val = 200, n_test = 200;
  std::uint64_t seed = 0;
  int height = 32, width = 32;
};

int gen_data(const GenDataArgs& a) {
  const auto start = Clock::now();
  if (a.n_train == 0) throw UsageError("empty train split");
  if (a.n_train < 0 || a.n_val < 0 || a.n_test < 0) throw UsageError("split sizes must be non-negative");
  fs::path dir = run_dir(a.out, a.seed);
  data::SyntheticConfig config;
  config.n_train = a.n_train;
  config.n_val = a.n_val;
  config.n_test = a.n_test;
  config.seed = a.seed;
  config.height = a.height;
  config.width = a.width;
  auto records = data::generate_dataset(config);
  data::write_dataset(dir, records);
  std::cout << "wrote " << records.size() << " records to " << (dir / "manifest.jsonl").string() << "\n"
            << "train " << a.n_train << " val " << a.n_val << " test " << a.n_test << "\n";
  Manifest m{"gen-data",
             {{"n_train", a.n_train}, {"n_val", a.n_val}, {"n_test", a.n_test}, {"height", a.height},
              {"width", a.width}},
             a.seed,
             {{"manifest", (dir / "manifest.jsonl").string()}},
             {{"total_seconds", seconds_since(start)}}};
  m.extra["dataset_seed"] = a.seed;
  m.write(dir);
  return kExitOk;
}

struct PretrainArgs {
  std::string data, data_dir, config, out;
  std::uint64_t seed = 0;
  LmPretrainConfig lm;
};

int pretrain_lm(PretrainArgs a, const CLI::App& cmd) {
  const auto start = Clock::now();
  DataSource source = data_source(a.data, a.data_dir);
  const fs::path& path = source.path;
  json file = read_config_file(a.config);
  ModelConfig config;
  merge_json(file, config);
  if (file.contains("pretrain")) {
    const json& p = file.at("pretrain");
    if (!cmd.count("--epochs")) a.lm.epochs = p.value("epochs", a.lm.epochs);
    if (!cmd.count("--lr")) a.lm.learning_rate = p.value("learning_rate", a.lm.learning_rate);
    if (!cmd.count("--batch-size")) a.lm.batch_size = p.value("batch_size", a.lm.batch_size);
    if (!cmd.count("--context-rate")) a.lm.context_rate = p.value("context_rate", a.lm.context_rate);
  }
  if (a.lm.context_rate < 0 || a.lm.context_rate > 1) throw UsageError("--context-rate must lie in [0, 1]");
  a.lm.seed = a.seed;
  auto all = source.load();
  std::vector<std::string> train_reports, heldout;
  for (const auto& r : all) (r.split == data::Split::Train ? train_reports : heldout).push_back(r.report);
  if (train_reports.empty()) throw UsageError("empty train split in " + path.string());
  fs::path dir = run_dir(a.out, a.seed);
  auto tokenizer = data::Tokenizer::build(train_reports);
  auto result = pretrain_language_model(config, tokenizer, train_reports, heldout, a.lm, [](int epoch, double loss) {
    std::cout << "epoch " << epoch << " loss " << loss << std::endl;
  });
  fs::path ckpt = dir / "lm.ckpt";
  result.model.save(ckpt, json{{"heldout_perplexity", result.heldout_perplexity},
                               {"baseline_perplexity", result.baseline_perplexity},
                               {"seed", a.seed}});
  std::cout << "held-out perplexity " << result.heldout_perplexity << " (random-init baseline "
            << result.baseline_perplexity << ")\n"
            << "backbone hash " << hex64(parameter_hash(result.model.parameters())) << "\n";
  Manifest m{"pretrain-lm",
             {{"model", result.model.config}, {"pretrain", to_json(a.lm)}, {"data", path.string()}},
             a.seed,
             {{"checkpoint", ckpt.string()}},
             {{"total_seconds", seconds_since(start)}}};
  m.extra["heldout_perplexity"] = result.heldout_perplexity;
  m.extra["baseline_perplexity"] = result.baseline_perplexity;
  m.write(dir);
  return kExitOk;
}

struct TrainArgs {
  std::string data, data_dir, lm_checkpoint, config, out, mode;
  int num_prompts = 0, depth = 0;
  std::uint64_t seed = 0;
  TrainConfig train;
};

int train_cmd(TrainArgs a, const CLI::App& cmd) {
  const auto start = Clock::now();
  json file = read_config_file(a.config);
  Checkpoint lm = load_language_model(a.lm_checkpoint);
  ModelConfig config = lm.meta.at("config").get<ModelConfig>();
  merge_json(file, config);
  if (!a.mode.empty()) config.mode = parse_mode(a.mode);
  if (cmd.count("--num-prompts")) config.num_prompts = a.num_prompts;
  if (cmd.count("--param-net-depth")) config.param_net_depth = a.depth;
  TrainConfig schedule;
  merge_train(file, schedule);
  if (cmd.count("--epochs")) schedule.epochs = a.train.epochs;
  if (cmd.count("--lr")) schedule.learning_rate = a.train.learning_rate;
  if (cmd.count("--batch-size")) schedule.batch_size = a.train.batch_size;
  if (cmd.count("--val-limit")) schedule.val_limit = a.train.val_limit;
  if (cmd.count("--max-report-tokens")) schedule.max_report_tokens = a.train.max_report_tokens;
  schedule.seed = a.seed;
  config.vocab_size = data::Tokenizer::from_json(lm.meta.at("tokenizer")).size();
  config.validate();

  DataSource source = data_source(a.data, a.data_dir);
  const fs::path& path = source.path;
  auto all = source.load();
  auto train_records = data::filter_split(all, data::Split::Train);
  auto val_records = data::filter_split(all, data::Split::Val);
  if (train_records.empty()) throw UsageError("empty train split in " + path.string());
  fs::path dir = run_dir(a.out, a.seed);

  ReportModel model(config, data::Tokenizer::from_json(lm.meta.at("tokenizer")), a.seed, &lm);
  const std::string lm_hash = hex64(parameter_hash(lm.params));
  std::ofstream log(dir / "train_log.jsonl");
  auto result = train(model, train_records, val_records, schedule, [&](const EpochLog& e) {
    std::cout << "epoch " << e.epoch << " loss " << e.train_loss << " val BL4 " << e.val_bleu4 << " (" << e.seconds
              << "s)" << std::endl;
    log << json{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_bleu4", e.val_bleu4}, {"seconds", e.seconds}}
               .dump()
        << '\n';
  });
  const std::string backbone_hash = hex64(parameter_hash(model.frozen_parameters()));
  fs::path ckpt = dir / "model.ckpt";
  model.save(ckpt, json{{"seed", a.seed}, {"best_epoch", result.best_epoch}, {"lm_hash", lm_hash}});
  std::cout << "initial loss " << result.initial_loss << " final loss " << result.epochs.back().train_loss << "\n"
            << "best epoch " << result.best_epoch << " val BL4 " << result.best_val_bleu4 << "\n"
            << "truncated reports " << result.counters.truncated_reports << "\n"
            << "backbone hash " << lm_hash << " -> " << backbone_hash << "\n";
  Manifest m{"train",
             {{"model", config}, {"train", to_json(schedule)}, {"data", path.string()},
              {"lm_checkpoint", a.lm_checkpoint}},
             a.seed,
             {{"checkpoint", ckpt.string()}, {"log", (dir / "train_log.jsonl").string()}},
             {{"total_seconds", seconds_since(start)}}};
  m.extra["initial_loss"] = result.initial_loss;
  m.extra["final_loss"] = result.epochs.back().train_loss;
  m.extra["best_epoch"] = result.best_epoch;
  m.extra["truncated_reports"] = result.counters.truncated_reports;
  m.extra["backbone_hash_before"] = lm_hash;
  m.extra["backbone_hash_after"] = backbone_hash;
  m.write(dir);
  return kExitOk;
}

struct GenerateArgs {
  std::string checkpoint, image, data, data_dir, split = "test", out;
  int max_len = 40;
  bool drop_gamma = false, drop_beta = false;
};

int generate_cmd(const GenerateArgs& a) {
  ReportModel model = load_model(a.checkpoint);
  model.ablation = {a.drop_gamma, a.drop_beta};
  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) throw UsageError("cannot write " + a.out);
  }
  std::ostream& out = a.out.empty() ? std::cout : file;
  if (!a.image.empty()) {
    if (!fs::exists(a.image)) throw UsageError("missing image " + a.image);
    out << generate(model, data::read_image_file(a.image), a.max_len).text << '\n';
    return kExitOk;
  }
  auto records = load_split(data_source(a.data, a.data_dir), data::parse_split(a.split));
  for (std::size_t i = 0; i < records.size(); ++i) {
    json j = generation_json(generate(model, records[i].image, a.max_len));
    j["index"] = i;
    out << j.dump() << '\n';
  }
  return kExitOk;
}

struct EvaluateArgs {
  std::string checkpoint, data, data_dir, split = "test", pairs, out;
  int max_len = 40;
  bool drop_gamma = false, drop_beta = false;
};

int evaluate_cmd(const EvaluateArgs& a) {
  ReportModel model = load_model(a.checkpoint);
  model.ablation = {a.drop_gamma, a.drop_beta};
  auto records = load_split(data_source(a.data, a.data_dir), data::parse_split(a.split));
  auto ev = evaluate(model, records, a.max_len);
  json j = metrics::to_json(ev.report);
  j["split"] = a.split;
  j["records"] = records.size();
  bool scenes = false;
  for (const auto& r : records) scenes = scenes || r.scene.has_value();
  if (scenes) j["scene_accuracy"] = scene_accuracy(records, ev.hypotheses);
  if (!a.pairs.empty()) {
    std::ofstream csv(a.pairs);
    if (!csv) throw UsageError("cannot write " + a.pairs);
    csv << "index,hypothesis,reference,RGL,MTR\n";
    for (std::size_t i = 0; i < ev.hypotheses.size(); ++i)
      csv << i << ',' << csv_quote(ev.hypotheses[i]) << ',' << csv_quote(ev.references[i]) << ','
          << metrics::rouge_l_pair(ev.hypotheses[i], ev.references[i]) << ','
          << metrics::meteor_lite_pair(ev.hypotheses[i], ev.references[i]) << '\n';
  }
  if (!a.out.empty()) write_json_atomic(a.out, j);
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

struct AblateArgs {
  std::string suite, data, data_dir, lm_checkpoint, config, out, cache_dir;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  TrainConfig train;
};

int ablate_cmd(AblateArgs a, const CLI::App& cmd) {
  const auto start = Clock::now();
  json file = read_config_file(a.config);
  Checkpoint lm = load_language_model(a.lm_checkpoint);
  ModelConfig config = lm.meta.at("config").get<ModelConfig>();
  merge_json(file, config);
  auto cells = ablation_grid(a.suite, config);  // rejects unknown suites before any work
  TrainConfig schedule;
  merge_train(file, schedule);
  if (cmd.count("--epochs")) schedule.epochs = a.train.epochs;
  if (cmd.count("--lr")) schedule.learning_rate = a.train.learning_rate;
  if (cmd.count("--batch-size")) schedule.batch_size = a.train.batch_size;
  if (cmd.count("--val-limit")) schedule.val_limit = a.train.val_limit;

  DataSource source = data_source(a.data, a.data_dir);
  const fs::path& path = source.path;
  auto all = source.load();
  auto train_records = data::filter_split(all, data::Split::Train);
  if (train_records.empty()) throw UsageError("empty train split in " + path.string());
  fs::path dir = run_dir(a.out, a.seeds.empty() ? 0 : a.seeds.front());
  AblationRunner runner(config, schedule, lm, train_records, data::filter_split(all, data::Split::Val),
                        data::filter_split(all, data::Split::Test),
                        a.cache_dir.empty() ? std::nullopt : std::optional<fs::path>(a.cache_dir));
  runner.set_log([](const std::string& line) { std::cerr << line << std::endl; });
  auto rows = runner.run(a.suite, a.seeds);
  fs::path csv_path = dir / (a.suite + ".csv");
  {
    std::ofstream csv(csv_path);
    write_ablation_csv(csv, rows);
  }
  write_ablation_csv(std::cout, rows);
  Manifest m{"ablate",
             {{"model", config}, {"train", to_json(schedule)}, {"suite", a.suite}, {"seeds", a.seeds},
              {"data", path.string()}, {"lm_checkpoint", a.lm_checkpoint}},
             a.seeds.empty() ? 0 : a.seeds.front(),
             {{"csv", csv_path.string()}},
             {{"total_seconds", seconds_since(start)}}};
  m.extra["cells"] = cells.size();
  m.extra["models_trained"] = runner.models_trained();
  m.write(dir);
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"CPT: image-to-report generation with customized prompts over a frozen language model"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic image/report dataset");
  gen->add_option("--out", gd.out, "Output directory")->required();
  gen->add_option("--n-train", gd.n_train, "Training records");
  gen->add_option("--n-val", gd.n_val, "Validation records");
  gen->add_option("--n-test", gd.n_test, "Test records");
  gen->add_option("--seed", gd.seed, "Dataset seed");
  gen->add_option("--height", gd.height, "Image height");
  gen->add_option("--width", gd.width, "Image width");

  PretrainArgs pa;
  auto* pre = app.add_subcommand("pretrain-lm", "Pretrain the language backbone on reports and freeze it");
  pre->add_option("--data", pa.data, "Dataset manifest or directory");
  pre->add_option("--data-dir", pa.data_dir, "Root for relative image paths in the manifest");
  pre->add_option("--config", pa.config, "Model config JSON");
  pre->add_option("--out", pa.out, "Run directory");
  pre->add_option("--seed", pa.seed, "Seed");
  pre->add_option("--epochs", pa.lm.epochs, "Pretraining epochs");
  pre->add_option("--lr", pa.lm.learning_rate, "Learning rate");
  pre->add_option("--batch-size", pa.lm.batch_size, "Reports per step");
  pre->add_option("--context-rate", pa.lm.context_rate, "Fraction of reports preceded by a shuffled context");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train encoder, projection, prompts and parameter network");
  tr->add_option("--data", ta.data, "Dataset manifest or directory");
  tr->add_option("--data-dir", ta.data_dir, "Root for relative image paths in the manifest");
  tr->add_option("--lm-checkpoint", ta.lm_checkpoint, "Frozen language model checkpoint")->required();
  tr->add_option("--config", ta.config, "Model config JSON");
  tr->add_option("--mode", ta.mode, "none | prompt_wise | book_wise");
  tr->add_option("--num-prompts", ta.num_prompts, "Promptbook size N");
  tr->add_option("--param-net-depth", ta.depth, "Parameter network depth (1-3)");
  tr->add_option("--seed", ta.seed, "Seed");
  tr->add_option("--out", ta.out, "Run directory");
  tr->add_option("--epochs", ta.train.epochs, "Epochs");
  tr->add_option("--lr", ta.train.learning_rate, "Learning rate");
  tr->add_option("--batch-size", ta.train.batch_size, "Batch size");
  tr->add_option("--val-limit", ta.train.val_limit, "Validation records scored per epoch (0 = all)");
  tr->add_option("--max-report-tokens", ta.train.max_report_tokens, "Report length limit in tokens");

  GenerateArgs ga;
  auto* gn = app.add_subcommand("generate", "Greedy report generation");
  gn->add_option("--checkpoint", ga.checkpoint, "Model checkpoint")->required();
  auto* image_opt = gn->add_option("--image", ga.image, "Single image file");
  auto* data_opt = gn->add_option("--data", ga.data, "Dataset manifest or directory");
  gn->add_option("--data-dir", ga.data_dir, "Root for relative image paths in the manifest");
  image_opt->excludes(data_opt);
  gn->add_option("--split", ga.split, "train | val | test");
  gn->add_option("--max-len", ga.max_len, "Maximum generated tokens");
  gn->add_option("--out", ga.out, "Output file (default stdout)");
  gn->add_flag("--drop-gamma", ga.drop_gamma, "Replace gamma by 1");
  gn->add_flag("--drop-beta", ga.drop_beta, "Replace beta by 0");

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Score generated reports against a split");
  ev->add_option("--checkpoint", ea.checkpoint, "Model checkpoint")->required();
  ev->add_option("--data", ea.data, "Dataset manifest or directory");
  ev->add_option("--data-dir", ea.data_dir, "Root for relative image paths in the manifest");
  ev->add_option("--split", ea.split, "train | val | test");
  ev->add_option("--max-len", ea.max_len, "Maximum generated tokens");
  ev->add_option("--pairs", ea.pairs, "Per-pair CSV output");
  ev->add_option("--out", ea.out, "Metric JSON output");
  ev->add_flag("--drop-gamma", ea.drop_gamma, "Replace gamma by 1");
  ev->add_flag("--drop-beta", ea.drop_beta, "Replace beta by 0");

  AblateArgs aa;
  auto* ab = app.add_subcommand("ablate", "Run an ablation suite and emit CSV");
  ab->add_option("--suite", aa.suite, "table2 | table3 | table3-inference | table4 | fig4")->required();
  ab->add_option("--data", aa.data, "Dataset manifest or directory");
  ab->add_option("--data-dir", aa.data_dir, "Root for relative image paths in the manifest");
  ab->add_option("--lm-checkpoint", aa.lm_checkpoint, "Frozen language model checkpoint")->required();
  ab->add_option("--config", aa.config, "Model config JSON");
  ab->add_option("--seeds", aa.seeds, "Comma-separated seeds")->delimiter(',');
  ab->add_option("--out", aa.out, "Run directory");
  ab->add_option("--cache-dir", aa.cache_dir, "Directory for reusable trained models");
  ab->add_option("--epochs", aa.train.epochs, "Epochs per cell");
  ab->add_option("--lr", aa.train.learning_rate, "Learning rate");
  ab->add_option("--batch-size", aa.train.batch_size, "Batch size");
  ab->add_option("--val-limit", aa.train.val_limit, "Validation records scored per epoch (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return gen_data(gd);
    if (*pre) return pretrain_lm(pa, *pre);
    if (*tr) return train_cmd(ta, *tr);
    if (*gn) return generate_cmd(ga);
    if (*ev) return evaluate_cmd(ea);
    if (*ab) return ablate_cmd(aa, *ab);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace cpt::cli
