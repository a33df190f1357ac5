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

#include "cpt/data/dataset.hpp"

#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cpt/data/tokenizer.hpp"
#include "cpt/util/rng.hpp"

namespace cpt::data {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + std::string(name) + "' (expected train, val or test)");
}

DatasetRecord generate_record(std::uint64_t seed, int height, int width) {
  DatasetRecord rec;
  rec.scene = random_scene(seed);
  rec.image = render(*rec.scene, height, width);
  rec.report = templatize(*rec.scene);
  return rec;
}

std::uint64_t record_seed(std::uint64_t dataset_seed, std::uint64_t index) {
  return splitmix64(stream_seed(dataset_seed, "data") + index);
}

std::vector<DatasetRecord> generate_dataset(const SyntheticConfig& config) {
  if (config.n_train < 0 || config.n_val < 0 || config.n_test < 0)
    throw DatasetError("split sizes must be non-negative");
  std::vector<DatasetRecord> records;
  const int total = config.n_train + config.n_val + config.n_test;
  records.reserve(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) {
    DatasetRecord rec = generate_record(record_seed(config.seed, static_cast<std::uint64_t>(i)), config.height,
                                        config.width);
    rec.split = i < config.n_train ? Split::Train : (i < config.n_train + config.n_val ? Split::Val : Split::Test);
    const auto tokens = split_words(rec.report).size() + 2;
    if (tokens > static_cast<std::size_t>(config.max_report_tokens))
      throw DatasetError("report of " + std::to_string(tokens) + " tokens exceeds max_report_tokens=" +
                         std::to_string(config.max_report_tokens));
    records.push_back(std::move(rec));
  }
  return records;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<DatasetRecord>& records) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) throw DatasetError("cannot create " + (dir / "images").string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::binary | std::ios::trunc);
  if (!manifest) throw DatasetError("cannot write " + (dir / "manifest.jsonl").string());
  std::vector<int> counters(3, 0);
  for (const auto& rec : records) {
    int& n = counters[static_cast<std::size_t>(rec.split)];
    char name[64];
    std::snprintf(name, sizeof(name), "images/%s_%05d.img", std::string(to_string(rec.split)).c_str(), n++);
    write_image_file(dir / name, rec.image);
    nlohmann::json line;
    line["image"] = name;
    line["report"] = rec.report;
    line["split"] = to_string(rec.split);
    if (rec.scene) line["scene"] = *rec.scene;
    manifest << line.dump() << '\n';
  }
  if (!manifest) throw DatasetError("short write to manifest");
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path,
                                        const std::optional<std::filesystem::path>& data_root) {
  std::filesystem::path manifest_path = path;
  if (std::filesystem::is_directory(path)) manifest_path = path / "manifest.jsonl";
  std::ifstream in(manifest_path);
  if (!in) throw DatasetError("cannot open manifest " + manifest_path.string());
  const std::filesystem::path root = data_root.value_or(manifest_path.parent_path());

  std::vector<DatasetRecord> records;
  std::string text;
  int line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto where = [&] { return manifest_path.string() + ":" + std::to_string(line_no); };
    nlohmann::json line;
    try {
      line = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError("parse error at " + where() + ": " + e.what());
    }
    DatasetRecord rec;
    try {
      if (!line.is_object() || !line.contains("image") || !line.contains("report") || !line.contains("split"))
        throw DatasetError("needs image, report and split fields");
      rec.report = line.at("report").get<std::string>();
      if (split_words(rec.report).empty()) throw DatasetError("empty report");
      rec.split = parse_split(line.at("split").get<std::string>());
      if (line.contains("scene")) rec.scene = line.at("scene").get<SceneSpec>();
      const auto& image = line.at("image");
      if (image.is_string()) {
        auto file = root / image.get<std::string>();
        if (!std::filesystem::exists(file))
          throw DatasetError("record at " + where() + " references missing image " + file.string());
        rec.image = read_image_file(file);
      } else if (image.is_object()) {
        auto scene = image.at("scene").get<SceneSpec>();
        rec.image = render(scene, image.value("height", 32), image.value("width", 32));
        if (!rec.scene) rec.scene = scene;
      } else {
        throw DatasetError("image must be a path or an inline scene object");
      }
    } catch (const DatasetError& e) {
      if (std::string(e.what()).find(where()) != std::string::npos) throw;
      throw DatasetError("parse error at " + where() + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError("parse error at " + where() + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw DatasetError("parse error at " + where() + ": " + e.what());
    } catch (const ImageError& e) {
      throw DatasetError("bad image in record at " + where() + ": " + e.what());
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<DatasetRecord> filter_split(const std::vector<DatasetRecord>& records, Split split) {
  std::vector<DatasetRecord> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(r);
  return out;
}

}  // namespace cpt::data
