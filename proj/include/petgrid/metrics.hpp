/*
 * Copyright 2026 petgrid authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PETGRID_METRICS_HPP
#define PETGRID_METRICS_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "petgrid/common.hpp"

namespace petgrid {

struct EmptyCorpus : Error {
    EmptyCorpus() : Error("metric requires a nonempty corpus") {}
};

struct LengthMismatch : Error {
    LengthMismatch() : Error("score lists must have equal length >= 3") {}
};

struct DegenerateVariance : Error {
    DegenerateVariance()
        : Error("rank correlation is undefined when one input is constant") {}
};

/// One candidate/reference pair, already tokenized with tokenize_caption.
struct EvalPair {
    std::string id;
    std::vector<std::string> candidate;
    std::vector<std::string> reference;
    std::optional<double> human_score;
};

/// Metric tokenizer: lowercase; alphanumeric runs form tokens; a '.' is kept
/// only between two digits (so measurement values like 8.4 stay one token);
/// every other character separates tokens.
std::vector<std::string> tokenize_caption(std::string_view text);

/// Corpus-level BLEU-4: clipped n-gram precisions pooled over the corpus,
/// geometric mean over n = 1..4 with brevity penalty. Smoothing is add-one
/// on numerator and denominator for n >= 2 (unigram precision unsmoothed, so
/// zero overlap scores zero).
double bleu4(const std::vector<EvalPair>& pairs);

/// ROUGE-L F-measure per pair (beta^2 = 1.44, recall-weighted), corpus score
/// is the mean over pairs.
double rouge_l(const std::vector<EvalPair>& pairs);

/// Simplified METEOR: exact matches first, then Porter-stem matches,
/// harmonic mean weighted 9:1 toward recall, fragmentation penalty
/// 0.5 * ((chunks - 1) / matches)^3. A single contiguous match carries no
/// penalty, so identical texts score exactly 1.
double meteor_simple(const std::vector<EvalPair>& pairs);

/// CIDEr: TF-IDF n-gram cosine (n = 1..4, IDF from the reference corpus),
/// averaged over n, scaled by 10. The sigma = 6 length-Gaussian variant is
/// available behind `gaussian_length_penalty` and off by default.
double cider(const std::vector<EvalPair>& pairs,
             bool gaussian_length_penalty = false);

/// Spearman rank correlation with average ranks on ties (Pearson correlation
/// of mid-ranks). Requires equal lengths >= 3; throws DegenerateVariance
/// instead of returning NaN on constant input.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// Per-pair scores (the corpus aggregates above are the primary interface;
// these feed the per-pair section of the evaluation report).
double bleu4_pair(const EvalPair& pair);
double rouge_l_pair(const EvalPair& pair);
double meteor_pair(const EvalPair& pair);

/// Reusable CIDEr corpus context (IDF table built once over the references).
class CiderScorer {
public:
    explicit CiderScorer(const std::vector<EvalPair>& pairs,
                         bool gaussian_length_penalty = false);
    double pair_score(const EvalPair& pair) const;

private:
    std::vector<std::map<std::string, int>> document_frequency_;  // per n
    double log_corpus_size_ = 0.0;
    bool gaussian_;
};

/// Per-pair and corpus-level scores plus the rank-correlation summary.
struct EvalReport {
    struct PairScores {
        std::string id;
        double bleu4 = 0.0;
        double rouge_l = 0.0;
        double meteor = 0.0;
        double cider = 0.0;
        std::optional<double> human_score;
    };
    std::vector<PairScores> pairs;
    double corpus_bleu4 = 0.0;
    double corpus_rouge_l = 0.0;
    double corpus_meteor = 0.0;
    double corpus_cider = 0.0;
    std::map<std::string, double> spearman_by_metric;  // present with human scores

    std::string to_json() const;
};

EvalReport evaluate(const std::vector<EvalPair>& pairs);

}  // namespace petgrid

#endif  // PETGRID_METRICS_HPP
