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

#include "petgrid/report_parser.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace petgrid {

namespace {

using nlohmann::json;

// Default pattern inventory, version 1. data/patterns.json ships the same
// content; a unit test keeps the two in sync.
constexpr const char* kDefaultPatternsJson = R"PAT({
  "version": 1,
  "suv": [
    "\\bSUV\\s*-?\\s*max(?:imum)?\\b[\\s:=]*(?:(?:of|is|was|measures|measuring|measured|previously|currently|now|approximately)\\s+){0,2}\\(?\\s*(\\d+(?:\\.\\d+)?)",
    "\\bmax(?:imum)?\\s+SUV\\b[\\s:=]*(?:(?:of|is|was)\\s+){0,2}\\(?\\s*(\\d+(?:\\.\\d+)?)",
    "\\bSUV\\b\\s*(?:of|=|:)\\s*\\(?\\s*(\\d+(?:\\.\\d+)?)"
  ],
  "slice": [
    "\\b(?:axial\\s+)?(?:slice|image|im)\\b\\s*(?:number|no\\.?)?\\s*#?\\s*(\\d{1,5})\\b"
  ],
  "prior": [
    "\\bprevious(?:ly)?\\b",
    "\\bprior\\b",
    "\\bcompared\\s+(?:to|with)\\b",
    "\\bwas\\b",
    "\\bhad\\s+measured\\b",
    "\\binterval\\s+(?:decrease|increase|change|resolution)\\b",
    "\\bno\\s+longer\\b"
  ]
})PAT";

std::regex compile(const std::string& pattern) {
    try {
        return std::regex(pattern, std::regex::ECMAScript | std::regex::icase);
    } catch (const std::regex_error& e) {
        throw Error("bad pattern '" + pattern + "': " + e.what());
    }
}

struct Span {
    std::size_t begin;
    std::size_t end;
    double value;
};

// All matches of the pattern family, sorted by position with overlapping
// later matches dropped (first pattern listed wins on equal start).
std::vector<Span> collect(const std::vector<std::regex>& family,
                          std::string_view text) {
    const std::string s(text);
    std::vector<Span> all;
    for (const auto& re : family) {
        for (auto it = std::sregex_iterator(s.begin(), s.end(), re);
             it != std::sregex_iterator(); ++it) {
            const std::smatch& m = *it;
            double value = 0.0;
            try {
                value = std::stod(m.str(1));
            } catch (...) {
                continue;
            }
            all.push_back({static_cast<std::size_t>(m.position(0)),
                           static_cast<std::size_t>(m.position(0) + m.length(0)),
                           value});
        }
    }
    std::stable_sort(all.begin(), all.end(), [](const Span& a, const Span& b) {
        if (a.begin != b.begin) return a.begin < b.begin;
        return a.end > b.end;
    });
    std::vector<Span> kept;
    for (const Span& sp : all) {
        if (!kept.empty() && sp.begin < kept.back().end) continue;
        kept.push_back(sp);
    }
    return kept;
}

}  // namespace

const PatternSet& PatternSet::defaults() {
    static const PatternSet instance = from_json_text(kDefaultPatternsJson);
    return instance;
}

PatternSet PatternSet::from_json_text(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(std::string("pattern inventory is not valid JSON: ") + e.what());
    }
    PatternSet p;
    p.version_ = j.value("version", 0);
    for (const auto& s : j.at("suv")) p.suv_.push_back(compile(s.get<std::string>()));
    for (const auto& s : j.at("slice")) p.slice_.push_back(compile(s.get<std::string>()));
    for (const auto& s : j.at("prior")) p.prior_.push_back(compile(s.get<std::string>()));
    if (p.suv_.empty() || p.slice_.empty()) {
        throw Error("pattern inventory needs at least one SUV and one slice pattern");
    }
    return p;
}

PatternSet PatternSet::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open pattern inventory: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

bool PatternSet::filter_candidate(std::string_view text) const {
    return !collect(suv_, text).empty() && !collect(slice_, text).empty();
}

std::vector<Measurement> PatternSet::extract_measurements(std::string_view text) const {
    const std::vector<Span> suvs = collect(suv_, text);
    const std::vector<Span> slices = collect(slice_, text);

    std::vector<Measurement> out;
    for (const Span& sv : suvs) {
        if (!(sv.value > 0.0)) continue;
        const Span* chosen = nullptr;
        // Nearest slice mention following the SUV mention...
        for (const Span& sl : slices) {
            if (sl.begin >= sv.end) {
                chosen = &sl;
                break;
            }
        }
        // ...else the nearest one preceding it.
        if (!chosen) {
            for (const Span& sl : slices) {
                if (sl.end <= sv.begin) chosen = &sl;
            }
        }
        if (!chosen) continue;
        const int slice_number = static_cast<int>(chosen->value);
        if (slice_number < 1) continue;
        out.push_back({sv.value, slice_number, sv.begin, sv.end});
    }
    if (out.empty()) throw NoPairFound();
    return out;
}

bool PatternSet::flag_prior_reference(std::string_view text) const {
    const std::string s(text);
    for (const auto& re : prior_) {
        if (std::regex_search(s, re)) return true;
    }
    return false;
}

namespace {

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

AnatomyLexicon AnatomyLexicon::from_string(const std::string& tsv_content) {
    AnatomyLexicon lex;
    std::istringstream in(tsv_content);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab == std::string::npos
                                                    ? std::string::npos
                                                    : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 4) {
            throw Error("lexicon line " + std::to_string(lineno) +
                        ": expected 4 tab-separated fields");
        }
        Entry e{to_lower(normalize_whitespace(fields[0])), fields[1], fields[2],
                fields[3]};
        if (e.term.empty()) {
            throw Error("lexicon line " + std::to_string(lineno) + ": empty term");
        }
        lex.entries_.push_back(std::move(e));
    }
    std::sort(lex.entries_.begin(), lex.entries_.end(),
              [](const Entry& a, const Entry& b) {
                  if (a.term.size() != b.term.size()) return a.term.size() > b.term.size();
                  return a.term < b.term;
              });
    return lex;
}

AnatomyLexicon AnatomyLexicon::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open anatomy lexicon: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str());
}

std::optional<AnatomyLexicon::Entry> AnatomyLexicon::lookup(
    std::string_view sentence) const {
    const std::string hay = to_lower(sentence);
    const Entry* best = nullptr;
    std::size_t best_pos = 0;
    for (const Entry& e : entries_) {
        if (best && e.term.size() < best->term.size()) break;  // sorted by length
        std::size_t pos = hay.find(e.term);
        while (pos != std::string::npos) {
            const bool left_ok = pos == 0 || !is_word_char(hay[pos - 1]);
            const std::size_t after = pos + e.term.size();
            const bool right_ok = after >= hay.size() || !is_word_char(hay[after]);
            if (left_ok && right_ok) break;
            pos = hay.find(e.term, pos + 1);
        }
        if (pos == std::string::npos) continue;
        if (!best || pos < best_pos) {
            best = &e;
            best_pos = pos;
        }
    }
    if (!best) return std::nullopt;
    return *best;
}

LesionRecord to_record(const Sentence& s, const Measurement& m,
                       const AnatomyLexicon& vocab, bool is_prior_reference) {
    LesionRecord r;
    if (auto hit = vocab.lookup(s.text)) {
        r.region = hit->region;
        r.organ = hit->organ;
        r.anatomic_subsite = hit->subsite;
    }
    r.report = s.text;
    r.suv_max = m.suv_max;
    r.slice_number = m.slice_number;
    r.exam_id = s.exam_id;
    r.provenance = s.index;
    r.is_prior_reference = is_prior_reference;
    return r;
}

std::string normalize_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool in_space = true;  // also trims leading space
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!in_space) out.push_back(' ');
            in_space = true;
        } else {
            out.push_back(c);
            in_space = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

std::vector<std::string> split_sentences(const std::string& report_text) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&]() {
        const std::string norm = normalize_whitespace(current);
        if (!norm.empty()) out.push_back(norm);
        current.clear();
    };
    for (std::size_t i = 0; i < report_text.size(); ++i) {
        const char c = report_text[i];
        if (c == '\n' || c == '\r') {
            flush();
            continue;
        }
        current.push_back(c);
        if (c == '.') {
            // Sentence boundary: period, whitespace, then a capital letter.
            std::size_t j = i + 1;
            std::size_t ws = 0;
            while (j < report_text.size() &&
                   (report_text[j] == ' ' || report_text[j] == '\t')) {
                ++j;
                ++ws;
            }
            if (ws > 0 && j < report_text.size() &&
                std::isupper(static_cast<unsigned char>(report_text[j]))) {
                flush();
                i = j - 1;
            }
        }
    }
    flush();
    return out;
}

std::vector<LesionRecord> parse_report(const std::string& report_text,
                                       const std::string& exam_id,
                                       const PatternSet& patterns,
                                       const AnatomyLexicon& vocab) {
    std::vector<LesionRecord> records;
    const std::vector<std::string> sentences = split_sentences(report_text);
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        Sentence s{sentences[i], exam_id, static_cast<int>(i)};
        if (!patterns.filter_candidate(s)) continue;
        std::vector<Measurement> pairs;
        try {
            pairs = patterns.extract_measurements(s);
        } catch (const NoPairFound&) {
            continue;
        }
        const bool prior = patterns.flag_prior_reference(s);
        for (const Measurement& m : pairs) {
            records.push_back(to_record(s, m, vocab, prior));
        }
    }
    return records;
}

namespace {

json record_to_json_obj(const LesionRecord& r) {
    // Field order is part of the documented JSONL layout.
    json j = json::object();
    j["region"] = r.region;
    j["organ"] = r.organ;
    j["anatomic_subsite"] = r.anatomic_subsite;
    j["report"] = r.report;
    j["suv_max"] = r.suv_max;
    j["slice_number"] = r.slice_number;
    j["exam_id"] = r.exam_id;
    j["provenance"] = r.provenance;
    j["is_prior_reference"] = r.is_prior_reference;
    return j;
}

}  // namespace

std::string record_to_json(const LesionRecord& r) {
    return record_to_json_obj(r).dump();
}

LesionRecord record_from_json(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw Error(std::string("bad record JSON: ") + e.what());
    }
    LesionRecord r;
    try {
        r.region = j.at("region").get<std::string>();
        r.organ = j.at("organ").get<std::string>();
        r.anatomic_subsite = j.at("anatomic_subsite").get<std::string>();
        r.report = j.at("report").get<std::string>();
        r.suv_max = j.at("suv_max").get<double>();
        r.slice_number = j.at("slice_number").get<int>();
        r.exam_id = j.at("exam_id").get<std::string>();
        r.provenance = j.value("provenance", 0);
        r.is_prior_reference = j.at("is_prior_reference").get<bool>();
    } catch (const json::exception& e) {
        throw Error(std::string("record JSON missing field: ") + e.what());
    }
    return r;
}

std::vector<LesionRecord> read_records_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open records file: " + path);
    std::vector<LesionRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (normalize_whitespace(line).empty()) continue;
        out.push_back(record_from_json(line));
    }
    return out;
}

void write_records_jsonl(const std::vector<LesionRecord>& records,
                         const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write records file: " + path);
    for (const auto& r : records) out << record_to_json(r) << '\n';
}

}  // namespace petgrid
