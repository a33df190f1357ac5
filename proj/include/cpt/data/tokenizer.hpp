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

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace cpt::data {

/// Lowercased whitespace tokens.
std::vector<std::string> split_words(std::string_view text);

/// Word-level vocabulary with reserved special tokens.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Tokenizer();

  /// Reserved tokens followed by corpus words in first-occurrence order.
  static Tokenizer build(std::span<const std::string> corpus);

  /// [BOS] word ids [EOS]; out-of-vocabulary words map to [UNK].
  std::vector<int> encode(std::string_view text) const;
  /// Drops [PAD], [BOS] and [EOS]; joins the rest with single spaces.
  std::string decode(std::span<const int> ids) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  nlohmann::json to_json() const;
  static Tokenizer from_json(const nlohmann::json& j);

  bool operator==(const Tokenizer& other) const { return tokens_ == other.tokens_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace cpt::data
