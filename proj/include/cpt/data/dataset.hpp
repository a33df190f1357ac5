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
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cpt/data/image.hpp"
#include "cpt/data/scene.hpp"

namespace cpt::data {

enum class Split { Train, Val, Test };

std::string_view to_string(Split split);
/// Throws std::invalid_argument for anything but "train", "val", "test".
Split parse_split(std::string_view name);

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetRecord {
  Image image;
  std::string report;
  std::optional<SceneSpec> scene;
  Split split = Split::Train;

  bool operator==(const DatasetRecord&) const = default;
};

struct SyntheticConfig {
  int n_train = 2000;
  int n_val = 200;
  int n_test = 200;
  std::uint64_t seed = 0;
  int height = 32;
  int width = 32;
  // [BOS] + words + [EOS]; three shapes need 36.
  int max_report_tokens = 40;
};

/// Pure function of the seed: same seed, same scene, image and report.
DatasetRecord generate_record(std::uint64_t seed, int height = 32, int width = 32);

/// Seed of the record at `index`; distinct indices give distinct seeds, so
/// splits never share a generating seed.
std::uint64_t record_seed(std::uint64_t dataset_seed, std::uint64_t index);

/// Records in train, val, test order. Throws DatasetError if a report
/// exceeds the token budget.
std::vector<DatasetRecord> generate_dataset(const SyntheticConfig& config);

/// Writes `manifest.jsonl` plus one raw image file per record under `dir`.
void write_dataset(const std::filesystem::path& dir, const std::vector<DatasetRecord>& records);

/// Reads a JSON Lines manifest (or `manifest.jsonl` inside a directory).
/// Relative image paths resolve against `data_root`, defaulting to the
/// manifest's directory. Each line's `image` is either a path or an inline
/// object {"scene": {...}, "height": H, "width": W}.
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path,
                                        const std::optional<std::filesystem::path>& data_root = std::nullopt);

std::vector<DatasetRecord> filter_split(const std::vector<DatasetRecord>& records, Split split);

}  // namespace cpt::data
