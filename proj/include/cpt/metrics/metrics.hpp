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
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cpt::metrics {

struct MetricError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Lowercased whitespace tokens.
std::vector<std::string> tokenize(const std::string& text);

struct BleuScores {
  double bleu[4] = {0, 0, 0, 0};  // BLEU-1..4
};

/// Corpus BLEU with clipped counts pooled over the corpus and a single
/// brevity penalty. Unsmoothed: a zero n-gram precision zeroes every higher
/// order.
BleuScores bleu(std::span<const std::string> hypotheses, std::span<const std::string> references);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// LCS F-measure for one pair; 0 when either side is empty or nothing matches.
double rouge_l_pair(const std::string& hypothesis, const std::string& reference, double beta = 1.2);
/// Mean of the per-pair scores.
double rouge_l(std::span<const std::string> hypotheses, std::span<const std::string> references, double beta = 1.2);

/// METEOR restricted to exact unigram matches, aligned greedily left to
/// right with each reference token used at most once.
double meteor_lite_pair(const std::string& hypothesis, const std::string& reference);
double meteor_lite(std::span<const std::string> hypotheses, std::span<const std::string> references);

struct MetricReport {
  double bl1 = 0, bl2 = 0, bl3 = 0, bl4 = 0, rgl = 0, mtr = 0;
};

MetricReport score_corpus(std::span<const std::string> hypotheses, std::span<const std::string> references,
                          double rouge_beta = 1.2);

nlohmann::json to_json(const MetricReport& r);

}  // namespace cpt::metrics
