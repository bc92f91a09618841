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

#ifndef PETGRID_REPORT_PARSER_HPP
#define PETGRID_REPORT_PARSER_HPP

#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "petgrid/common.hpp"

namespace petgrid {

struct NoPairFound : Error {
    NoPairFound() : Error("no (SUVmax, slice) pair could be formed") {}
};

/// One report sentence, normalized (trimmed, inner whitespace collapsed).
struct Sentence {
    std::string text;
    std::string exam_id;
    int index = 0;  // position within the report
};

/// Structured lesion-level finding. `slice_number` keeps the report's
/// 1-based numbering; `slice_index()` is the single conversion point to the
/// 0-based depth index used internally.
struct LesionRecord {
    std::string region = "unknown";
    std::string organ = "unknown";
    std::string anatomic_subsite = "unknown";
    std::string report;
    double suv_max = 0.0;
    int slice_number = 0;
    std::string exam_id;
    int provenance = 0;  // source sentence index
    bool is_prior_reference = false;

    int slice_index() const { return slice_number - 1; }

    bool operator==(const LesionRecord&) const = default;
};

/// A (SUVmax, slice) measurement extracted from a sentence. The span covers
/// the SUV mention, in character offsets into the normalized sentence text.
struct Measurement {
    double suv_max = 0.0;
    int slice_number = 0;
    std::size_t span_begin = 0;
    std::size_t span_end = 0;
};

/// Compiled SUV / slice / prior-study pattern inventory. The inventory is
/// data, not code: the shipped data/patterns.json carries the same content
/// as defaults() and can be extended without recompiling.
class PatternSet {
public:
    static const PatternSet& defaults();
    static PatternSet from_json_text(const std::string& json_text);
    static PatternSet from_file(const std::string& path);

    int version() const { return version_; }

    /// True iff the sentence mentions at least one SUV value and at least
    /// one slice number.
    bool filter_candidate(std::string_view text) const;
    bool filter_candidate(const Sentence& s) const { return filter_candidate(s.text); }

    /// All (SUVmax, slice) pairs in sentence order. Each SUV mention pairs
    /// with the nearest slice mention following it, else the nearest one
    /// preceding it. Throws NoPairFound when nothing can be paired.
    std::vector<Measurement> extract_measurements(std::string_view text) const;
    std::vector<Measurement> extract_measurements(const Sentence& s) const {
        return extract_measurements(s.text);
    }

    /// True iff the sentence matches the prior-study cue lexicon.
    bool flag_prior_reference(std::string_view text) const;
    bool flag_prior_reference(const Sentence& s) const {
        return flag_prior_reference(s.text);
    }

private:
    PatternSet() = default;
    int version_ = 0;
    std::vector<std::regex> suv_;
    std::vector<std::regex> slice_;
    std::vector<std::regex> prior_;
};

/// Term -> (region, organ, subsite) anatomy lookup loaded from a TSV file
/// (term, region, organ, subsite per line; '#' comments).
class AnatomyLexicon {
public:
    struct Entry {
        std::string term;
        std::string region;
        std::string organ;
        std::string subsite;
    };

    static AnatomyLexicon from_file(const std::string& path);
    static AnatomyLexicon from_string(const std::string& tsv_content);

    std::size_t size() const { return entries_.size(); }

    /// Longest lexicon term found in the sentence (case-insensitive,
    /// word-boundary delimited). Ties by earlier position, then by term.
    std::optional<Entry> lookup(std::string_view sentence) const;

private:
    std::vector<Entry> entries_;  // sorted by term length descending
};

/// Builds a LesionRecord from one measurement of a sentence. Anatomy falls
/// back to "unknown"; the report field keeps the whole normalized sentence.
LesionRecord to_record(const Sentence& s, const Measurement& m,
                       const AnatomyLexicon& vocab, bool is_prior_reference);

/// Splits raw report text into normalized sentences. Newlines are hard
/// boundaries; within a line, a period followed by whitespace and a capital
/// letter ends a sentence (decimal numbers are left intact).
std::vector<std::string> split_sentences(const std::string& report_text);

/// Whitespace normalization used for Sentence::text.
std::string normalize_whitespace(std::string_view text);

/// Full per-report composition: split, filter, extract, flag priors,
/// structure. Prior-reference sentences still yield records (flagged), so
/// downstream stages can report why they were skipped.
std::vector<LesionRecord> parse_report(const std::string& report_text,
                                       const std::string& exam_id,
                                       const PatternSet& patterns,
                                       const AnatomyLexicon& vocab);

/// JSONL (de)serialization; field names are part of the stable interface.
std::string record_to_json(const LesionRecord& r);
LesionRecord record_from_json(const std::string& line);
std::vector<LesionRecord> read_records_jsonl(const std::string& path);
void write_records_jsonl(const std::vector<LesionRecord>& records,
                         const std::string& path);

}  // namespace petgrid

#endif  // PETGRID_REPORT_PARSER_HPP
