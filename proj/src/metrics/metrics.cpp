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

#include "cpt/metrics/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

namespace cpt::metrics {
namespace {

void check_aligned(std::size_t h, std::size_t r) {
  if (h != r)
    throw MetricError("hypotheses and references differ in length (" + std::to_string(h) + " vs " +
                      std::to_string(r) + ")");
  if (h == 0) throw MetricError("empty corpus");
}

using Gram = std::vector<std::string>;

std::map<Gram, int> ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
  std::map<Gram, int> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[Gram(toks.begin() + i, toks.begin() + i + n)];
  return out;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) {
    std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
    out.push_back(std::move(w));
  }
  return out;
}

BleuScores bleu(std::span<const std::string> hypotheses, std::span<const std::string> references) {
  check_aligned(hypotheses.size(), references.size());
  double matched[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  double hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    auto hyp = tokenize(hypotheses[i]);
    auto ref = tokenize(references[i]);
    hyp_len += hyp.size();
    ref_len += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      auto hc = ngram_counts(hyp, n);
      auto rc = ngram_counts(ref, n);
      for (const auto& [gram, count] : hc) {
        auto it = rc.find(gram);
        if (it != rc.end()) matched[n - 1] += std::min(count, it->second);
        total[n - 1] += count;
      }
    }
  }
  BleuScores out;
  if (hyp_len == 0) return out;
  const double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  double log_sum = 0;
  for (int k = 0; k < 4; ++k) {
    if (matched[k] == 0 || total[k] == 0) break;  // this and every higher order stay 0
    log_sum += std::log(matched[k] / total[k]);
    out.bleu[k] = bp * std::exp(log_sum / (k + 1));
  }
  return out;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_pair(const std::string& hypothesis, const std::string& reference, double beta) {
  auto hyp = tokenize(hypothesis);
  auto ref = tokenize(reference);
  if (hyp.empty() || ref.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(hyp, ref));
  if (lcs == 0) return 0.0;
  const double p = lcs / hyp.size(), r = lcs / ref.size(), b2 = beta * beta;
  return (1 + b2) * p * r / (r + b2 * p);
}

double rouge_l(std::span<const std::string> hypotheses, std::span<const std::string> references, double beta) {
  check_aligned(hypotheses.size(), references.size());
  double sum = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) sum += rouge_l_pair(hypotheses[i], references[i], beta);
  return sum / hypotheses.size();
}

double meteor_lite_pair(const std::string& hypothesis, const std::string& reference) {
  auto hyp = tokenize(hypothesis);
  auto ref = tokenize(reference);
  if (hyp.empty() || ref.empty()) return 0.0;
  std::vector<bool> used(ref.size(), false);
  std::vector<long> align(hyp.size(), -1);
  double m = 0;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!used[j] && hyp[i] == ref[j]) {
        used[j] = true;
        align[i] = static_cast<long>(j);
        ++m;
        break;
      }
    }
  }
  if (m == 0) return 0.0;
  // A chunk is a maximal run of matches adjacent in both hypothesis and reference.
  double chunks = 0;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    if (align[i] < 0) continue;
    if (i == 0 || align[i - 1] < 0 || align[i - 1] + 1 != align[i]) ++chunks;
  }
  const double p = m / hyp.size(), r = m / ref.size();
  const double f = 10 * p * r / (r + 9 * p);
  const double penalty = 0.5 * std::pow(chunks / m, 3);
  return f * (1 - penalty);
}

double meteor_lite(std::span<const std::string> hypotheses, std::span<const std::string> references) {
  check_aligned(hypotheses.size(), references.size());
  double sum = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) sum += meteor_lite_pair(hypotheses[i], references[i]);
  return sum / hypotheses.size();
}

MetricReport score_corpus(std::span<const std::string> hypotheses, std::span<const std::string> references,
                          double rouge_beta) {
  auto b = bleu(hypotheses, references);
  MetricReport r;
  r.bl1 = b.bleu[0];
  r.bl2 = b.bleu[1];
  r.bl3 = b.bleu[2];
  r.bl4 = b.bleu[3];
  r.rgl = rouge_l(hypotheses, references, rouge_beta);
  r.mtr = meteor_lite(hypotheses, references);
  return r;
}

nlohmann::json to_json(const MetricReport& r) {
  return {{"BL1", r.bl1}, {"BL2", r.bl2}, {"BL3", r.bl3}, {"BL4", r.bl4}, {"RGL", r.rgl}, {"MTR", r.mtr}};
}

}  // namespace cpt::metrics
