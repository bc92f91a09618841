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

#include "petgrid/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "petgrid/stemmer.hpp"

namespace petgrid {

std::vector<std::string> tokenize_caption(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&]() {
        if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (c == '.' && i > 0 && i + 1 < text.size() &&
                   std::isdigit(static_cast<unsigned char>(text[i - 1])) &&
                   std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
            current.push_back('.');
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

namespace {

using Tokens = std::vector<std::string>;

std::map<std::string, int> ngram_counts(const Tokens& tokens, int n) {
    std::map<std::string, int> counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (int j = 1; j < n; ++j) {
            key.push_back(' ');
            key += tokens[i + j];
        }
        ++counts[key];
    }
    return counts;
}

struct BleuAccumulator {
    std::array<std::int64_t, 4> clipped{0, 0, 0, 0};
    std::array<std::int64_t, 4> total{0, 0, 0, 0};
    std::int64_t candidate_len = 0;
    std::int64_t reference_len = 0;

    void add(const EvalPair& p) {
        candidate_len += static_cast<std::int64_t>(p.candidate.size());
        reference_len += static_cast<std::int64_t>(p.reference.size());
        for (int n = 1; n <= 4; ++n) {
            const auto cand = ngram_counts(p.candidate, n);
            const auto ref = ngram_counts(p.reference, n);
            for (const auto& [gram, cnt] : cand) {
                total[n - 1] += cnt;
                const auto it = ref.find(gram);
                if (it != ref.end()) clipped[n - 1] += std::min(cnt, it->second);
            }
        }
    }

    double score() const {
        if (candidate_len == 0) return 0.0;
        double log_sum = 0.0;
        for (int n = 1; n <= 4; ++n) {
            double num = static_cast<double>(clipped[n - 1]);
            double den = static_cast<double>(total[n - 1]);
            if (n >= 2) {  // add-one smoothing for higher orders
                num += 1.0;
                den += 1.0;
            }
            if (num == 0.0 || den == 0.0) return 0.0;
            log_sum += std::log(num / den);
        }
        const double bp =
            candidate_len >= reference_len
                ? 1.0
                : std::exp(1.0 - static_cast<double>(reference_len) /
                                     static_cast<double>(candidate_len));
        return bp * std::exp(log_sum / 4.0);
    }
};

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1
                                            : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

void require_nonempty(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw EmptyCorpus();
}

}  // namespace

double bleu4(const std::vector<EvalPair>& pairs) {
    require_nonempty(pairs);
    BleuAccumulator acc;
    for (const auto& p : pairs) acc.add(p);
    return acc.score();
}

double bleu4_pair(const EvalPair& pair) {
    BleuAccumulator acc;
    acc.add(pair);
    return acc.score();
}

double rouge_l_pair(const EvalPair& pair) {
    if (pair.candidate.empty() && pair.reference.empty()) return 1.0;
    if (pair.candidate.empty() || pair.reference.empty()) return 0.0;
    const double lcs = static_cast<double>(lcs_length(pair.candidate, pair.reference));
    if (lcs == 0.0) return 0.0;
    const double precision = lcs / static_cast<double>(pair.candidate.size());
    const double recall = lcs / static_cast<double>(pair.reference.size());
    constexpr double beta2 = 1.2 * 1.2;
    return (1.0 + beta2) * precision * recall / (recall + beta2 * precision);
}

double rouge_l(const std::vector<EvalPair>& pairs) {
    require_nonempty(pairs);
    double sum = 0.0;
    for (const auto& p : pairs) sum += rouge_l_pair(p);
    return sum / static_cast<double>(pairs.size());
}

namespace {

// Two-stage greedy alignment: exact token matches first, then Porter-stem
// matches, each pairing the leftmost unmatched reference token.
std::vector<std::pair<std::size_t, std::size_t>> meteor_alignment(
    const Tokens& cand, const Tokens& ref) {
    std::vector<std::pair<std::size_t, std::size_t>> matches;
    std::vector<bool> cand_used(cand.size(), false), ref_used(ref.size(), false);

    for (std::size_t i = 0; i < cand.size(); ++i) {
        for (std::size_t j = 0; j < ref.size(); ++j) {
            if (!ref_used[j] && cand[i] == ref[j]) {
                matches.emplace_back(i, j);
                cand_used[i] = ref_used[j] = true;
                break;
            }
        }
    }
    std::vector<std::string> cand_stems(cand.size()), ref_stems(ref.size());
    for (std::size_t i = 0; i < cand.size(); ++i) cand_stems[i] = porter_stem(cand[i]);
    for (std::size_t j = 0; j < ref.size(); ++j) ref_stems[j] = porter_stem(ref[j]);
    for (std::size_t i = 0; i < cand.size(); ++i) {
        if (cand_used[i]) continue;
        for (std::size_t j = 0; j < ref.size(); ++j) {
            if (!ref_used[j] && cand_stems[i] == ref_stems[j]) {
                matches.emplace_back(i, j);
                cand_used[i] = ref_used[j] = true;
                break;
            }
        }
    }
    std::sort(matches.begin(), matches.end());
    return matches;
}

}  // namespace

double meteor_pair(const EvalPair& pair) {
    if (pair.candidate.empty() && pair.reference.empty()) return 1.0;
    if (pair.candidate.empty() || pair.reference.empty()) return 0.0;
    const auto matches = meteor_alignment(pair.candidate, pair.reference);
    const double m = static_cast<double>(matches.size());
    if (m == 0.0) return 0.0;

    const double precision = m / static_cast<double>(pair.candidate.size());
    const double recall = m / static_cast<double>(pair.reference.size());
    const double f_mean = 10.0 * precision * recall / (recall + 9.0 * precision);

    std::size_t chunks = 1;
    for (std::size_t i = 1; i < matches.size(); ++i) {
        const bool contiguous = matches[i].first == matches[i - 1].first + 1 &&
                                matches[i].second == matches[i - 1].second + 1;
        if (!contiguous) ++chunks;
    }
    const double frag = (static_cast<double>(chunks) - 1.0) / m;
    const double penalty = 0.5 * frag * frag * frag;
    return f_mean * (1.0 - penalty);
}

double meteor_simple(const std::vector<EvalPair>& pairs) {
    require_nonempty(pairs);
    double sum = 0.0;
    for (const auto& p : pairs) sum += meteor_pair(p);
    return sum / static_cast<double>(pairs.size());
}

CiderScorer::CiderScorer(const std::vector<EvalPair>& pairs,
                         bool gaussian_length_penalty)
    : document_frequency_(4), gaussian_(gaussian_length_penalty) {
    require_nonempty(pairs);
    for (const auto& p : pairs) {
        for (int n = 1; n <= 4; ++n) {
            const auto counts = ngram_counts(p.reference, n);
            for (const auto& [gram, cnt] : counts) {
                (void)cnt;  // presence only: one vote per reference
                ++document_frequency_[n - 1][gram];
            }
        }
    }
    log_corpus_size_ = std::log(static_cast<double>(pairs.size()));
}

double CiderScorer::pair_score(const EvalPair& pair) const {
    double total = 0.0;
    for (int n = 1; n <= 4; ++n) {
        const auto cand = ngram_counts(pair.candidate, n);
        const auto ref = ngram_counts(pair.reference, n);
        const auto& df = document_frequency_[n - 1];

        auto idf = [&](const std::string& gram) {
            const auto it = df.find(gram);
            const double d = it == df.end() ? 0.0 : static_cast<double>(it->second);
            return log_corpus_size_ - std::log(std::max(1.0, d));
        };

        double dot = 0.0, norm_c = 0.0, norm_r = 0.0;
        for (const auto& [gram, cnt] : cand) {
            const double wc = cnt * idf(gram);
            norm_c += wc * wc;
            const auto it = ref.find(gram);
            if (it != ref.end()) dot += wc * (it->second * idf(gram));
        }
        for (const auto& [gram, cnt] : ref) {
            const double wr = cnt * idf(gram);
            norm_r += wr * wr;
        }
        if (norm_c > 0.0 && norm_r > 0.0) {
            double sim = dot / (std::sqrt(norm_c) * std::sqrt(norm_r));
            if (gaussian_) {
                const double delta = static_cast<double>(pair.candidate.size()) -
                                     static_cast<double>(pair.reference.size());
                sim *= std::exp(-delta * delta / (2.0 * 6.0 * 6.0));
            }
            total += sim;
        }
    }
    return 10.0 * total / 4.0;
}

double cider(const std::vector<EvalPair>& pairs, bool gaussian_length_penalty) {
    const CiderScorer scorer(pairs, gaussian_length_penalty);
    double sum = 0.0;
    for (const auto& p : pairs) sum += scorer.pair_score(p);
    return sum / static_cast<double>(pairs.size());
}

namespace {

std::vector<double> mid_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3) throw LengthMismatch();
    const std::vector<double> rx = mid_ranks(x);
    const std::vector<double> ry = mid_ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = rx[i] - mx;
        const double dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw DegenerateVariance();
    return sxy / std::sqrt(sxx * syy);
}

EvalReport evaluate(const std::vector<EvalPair>& pairs) {
    require_nonempty(pairs);
    EvalReport report;
    const CiderScorer cider_scorer(pairs);

    for (const auto& p : pairs) {
        EvalReport::PairScores s;
        s.id = p.id;
        s.bleu4 = bleu4_pair(p);
        s.rouge_l = rouge_l_pair(p);
        s.meteor = meteor_pair(p);
        s.cider = cider_scorer.pair_score(p);
        s.human_score = p.human_score;
        report.pairs.push_back(std::move(s));
    }
    report.corpus_bleu4 = bleu4(pairs);
    report.corpus_rouge_l = rouge_l(pairs);
    report.corpus_meteor = meteor_simple(pairs);
    report.corpus_cider = cider(pairs);

    std::vector<double> human;
    std::vector<const EvalReport::PairScores*> scored;
    for (const auto& s : report.pairs) {
        if (s.human_score) {
            human.push_back(*s.human_score);
            scored.push_back(&s);
        }
    }
    if (human.size() >= 3) {
        const std::vector<std::pair<std::string, double EvalReport::PairScores::*>>
            metrics = {{"bleu4", &EvalReport::PairScores::bleu4},
                       {"rouge_l", &EvalReport::PairScores::rouge_l},
                       {"meteor", &EvalReport::PairScores::meteor},
                       {"cider", &EvalReport::PairScores::cider}};
        for (const auto& [name, member] : metrics) {
            std::vector<double> values;
            values.reserve(scored.size());
            for (const auto* s : scored) values.push_back(s->*member);
            try {
                report.spearman_by_metric[name] = spearman(values, human);
            } catch (const DegenerateVariance&) {
                // constant metric or constant human scores: rho undefined
            }
        }
    }
    return report;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["pairs"] = nlohmann::json::array();
    for (const auto& p : pairs) {
        nlohmann::json row;
        row["id"] = p.id;
        row["bleu4"] = p.bleu4;
        row["rouge_l"] = p.rouge_l;
        row["meteor"] = p.meteor;
        row["cider"] = p.cider;
        if (p.human_score) row["human_score"] = *p.human_score;
        j["pairs"].push_back(std::move(row));
    }
    j["corpus"] = {{"pair_count", pairs.size()},
                   {"bleu4", corpus_bleu4},
                   {"rouge_l", corpus_rouge_l},
                   {"meteor", corpus_meteor},
                   {"cider", corpus_cider}};
    if (!spearman_by_metric.empty()) {
        j["spearman"] = spearman_by_metric;
    }
    return j.dump(2);
}

}  // namespace petgrid
