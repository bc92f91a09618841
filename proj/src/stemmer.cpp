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

#include "petgrid/stemmer.hpp"

#include <array>

namespace petgrid {

namespace {

// Straight port of the Porter (1980) algorithm; `b` holds the word being
// stemmed and `k` the index of its last letter.
class PorterState {
public:
    explicit PorterState(std::string word) : b_(std::move(word)), k_(b_.size() - 1) {}

    std::string result() const { return b_.substr(0, k_ + 1); }

    void step1ab() {
        if (b_[k_] == 's') {
            if (ends("sses")) {
                k_ -= 2;
            } else if (ends("ies")) {
                set_to("i");
            } else if (b_[k_ - 1] != 's') {
                --k_;
            }
        }
        if (ends("eed")) {
            if (measure() > 0) --k_;
        } else if ((ends("ed") || ends("ing")) && vowel_in_stem()) {
            k_ = j_;
            if (ends("at")) {
                set_to("ate");
            } else if (ends("bl")) {
                set_to("ble");
            } else if (ends("iz")) {
                set_to("ize");
            } else if (double_consonant(k_)) {
                const char c = b_[k_];
                if (c != 'l' && c != 's' && c != 'z') --k_;
            } else if (measure() == 1 && cvc(k_)) {
                set_to("e");
            }
        }
    }

    void step1c() {
        if (ends("y") && vowel_in_stem()) b_[k_] = 'i';
    }

    void step2() {
        static constexpr std::array<std::pair<const char*, const char*>, 21> rules{{
            {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"},
            {"anci", "ance"},   {"izer", "ize"},    {"bli", "ble"},
            {"alli", "al"},     {"entli", "ent"},   {"eli", "e"},
            {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
            {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"},
            {"fulness", "ful"}, {"ousness", "ous"}, {"aliti", "al"},
            {"iviti", "ive"},   {"biliti", "ble"},  {"logi", "log"},
        }};
        for (const auto& [suffix, repl] : rules) {
            if (ends(suffix)) {
                if (measure() > 0) set_to(repl);
                return;
            }
        }
    }

    void step3() {
        static constexpr std::array<std::pair<const char*, const char*>, 7> rules{{
            {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
            {"ical", "ic"},  {"ful", ""},   {"ness", ""},
        }};
        for (const auto& [suffix, repl] : rules) {
            if (ends(suffix)) {
                if (measure() > 0) set_to(repl);
                return;
            }
        }
    }

    void step4() {
        static constexpr std::array<const char*, 19> suffixes{
            "al",  "ance", "ence", "er",   "ic",  "able", "ible", "ant", "ement",
            "ment", "ent", "ion",  "ou",   "ism", "ate",  "iti",  "ous", "ive",
            "ize"};
        for (const char* suffix : suffixes) {
            if (!ends(suffix)) continue;
            if (std::string_view(suffix) == "ion" &&
                !(j_ >= 0 && (b_[j_] == 's' || b_[j_] == 't'))) {
                return;
            }
            if (measure() > 1) k_ = j_;
            return;
        }
    }

    void step5() {
        j_ = static_cast<std::ptrdiff_t>(k_);
        if (b_[k_] == 'e') {
            const int m = measure();
            if (m > 1 || (m == 1 && !cvc(k_ - 1))) --k_;
        }
        if (b_[k_] == 'l' && double_consonant(k_) && measure() > 1) --k_;
    }

private:
    bool is_consonant(std::ptrdiff_t i) const {
        switch (b_[i]) {
            case 'a': case 'e': case 'i': case 'o': case 'u':
                return false;
            case 'y':
                return i == 0 ? true : !is_consonant(i - 1);
            default:
                return true;
        }
    }

    // Number of VC sequences in the stem b[0..j].
    int measure() const {
        int n = 0;
        std::ptrdiff_t i = 0;
        while (true) {
            if (i > j_) return n;
            if (!is_consonant(i)) break;
            ++i;
        }
        ++i;
        while (true) {
            while (true) {
                if (i > j_) return n;
                if (is_consonant(i)) break;
                ++i;
            }
            ++i;
            ++n;
            while (true) {
                if (i > j_) return n;
                if (!is_consonant(i)) break;
                ++i;
            }
            ++i;
        }
    }

    bool vowel_in_stem() const {
        for (std::ptrdiff_t i = 0; i <= j_; ++i) {
            if (!is_consonant(i)) return true;
        }
        return false;
    }

    bool double_consonant(std::ptrdiff_t i) const {
        if (i < 1) return false;
        return b_[i] == b_[i - 1] && is_consonant(i);
    }

    // consonant-vowel-consonant ending at i, last consonant not w/x/y.
    bool cvc(std::ptrdiff_t i) const {
        if (i < 2 || !is_consonant(i) || is_consonant(i - 1) || !is_consonant(i - 2)) {
            return false;
        }
        const char c = b_[i];
        return c != 'w' && c != 'x' && c != 'y';
    }

    bool ends(std::string_view suffix) {
        const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(suffix.size());
        if (len > static_cast<std::ptrdiff_t>(k_) + 1) return false;
        if (b_.compare(k_ + 1 - len, len, suffix) != 0) return false;
        j_ = static_cast<std::ptrdiff_t>(k_) - len;
        return true;
    }

    void set_to(std::string_view repl) {
        b_.replace(j_ + 1, b_.size() - (j_ + 1), repl);
        k_ = j_ + static_cast<std::ptrdiff_t>(repl.size());
    }

    std::string b_;
    std::ptrdiff_t k_;
    std::ptrdiff_t j_ = 0;
};

}  // namespace

std::string porter_stem(std::string_view word) {
    if (word.size() <= 2) return std::string(word);
    PorterState s{std::string(word)};
    s.step1ab();
    s.step1c();
    s.step2();
    s.step3();
    s.step4();
    s.step5();
    return s.result();
}

}  // namespace petgrid
