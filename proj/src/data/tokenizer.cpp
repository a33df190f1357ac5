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

#include "cpt/data/tokenizer.hpp"

#include <cctype>
#include <sstream>
#include <stdexcept>

namespace cpt::data {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

Tokenizer::Tokenizer() {
  for (const char* t : {"[PAD]", "[BOS]", "[EOS]", "[UNK]"}) add(t);
}

void Tokenizer::add(const std::string& token) {
  if (ids_.contains(token)) return;
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Tokenizer Tokenizer::build(std::span<const std::string> corpus) {
  if (corpus.empty()) throw std::invalid_argument("tokenizer corpus is empty");
  Tokenizer tok;
  for (const auto& text : corpus)
    for (auto& w : split_words(text)) tok.add(w);
  return tok;
}

int Tokenizer::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids{kBos};
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  ids.push_back(kEos);
  return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
  std::string out;
  for (int i : ids) {
    if (i == kPad || i == kBos || i == kEos) continue;
    if (!out.empty()) out += ' ';
    out += token(i);
  }
  return out;
}

nlohmann::json Tokenizer::to_json() const { return tokens_; }

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
  auto tokens = j.get<std::vector<std::string>>();
  Tokenizer tok;
  if (tokens.size() < 4 || !std::equal(tok.tokens_.begin(), tok.tokens_.end(), tokens.begin()))
    throw std::invalid_argument("serialized vocabulary does not start with the reserved tokens");
  for (const auto& t : tokens) tok.add(t);
  if (tok.tokens_.size() != tokens.size()) throw std::invalid_argument("serialized vocabulary has duplicates");
  return tok;
}

}  // namespace cpt::data
