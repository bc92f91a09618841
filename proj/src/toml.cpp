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

#include "petgrid/toml.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace petgrid {

namespace {

using nlohmann::json;

struct TomlError : Error {
    TomlError(int line, const std::string& why)
        : Error("TOML line " + std::to_string(line) + ": " + why) {}
};

class Parser {
public:
    explicit Parser(const std::string& text) : text_(text) {}

    json parse() {
        json root = json::object();
        json* table = &root;
        while (!at_end()) {
            skip_ws_and_comments();
            if (at_end()) break;
            if (peek() == '[') {
                table = open_table(root);
            } else {
                parse_key_value(*table);
            }
        }
        return root;
    }

private:
    bool at_end() const { return pos_ >= text_.size(); }
    char peek() const { return text_[pos_]; }
    char advance() {
        const char c = text_[pos_++];
        if (c == '\n') ++line_;
        return c;
    }

    void skip_spaces() {
        while (!at_end() && (peek() == ' ' || peek() == '\t')) ++pos_;
    }

    void skip_ws_and_comments() {
        while (!at_end()) {
            const char c = peek();
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                advance();
            } else if (c == '#') {
                while (!at_end() && peek() != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    void expect_line_end() {
        skip_spaces();
        if (at_end()) return;
        if (peek() == '#') {
            while (!at_end() && peek() != '\n') ++pos_;
        }
        if (at_end()) return;
        if (peek() == '\r') advance();
        if (at_end()) return;
        if (peek() != '\n') throw TomlError(line_, "unexpected trailing characters");
        advance();
    }

    std::string parse_bare_key() {
        std::string key;
        while (!at_end()) {
            const char c = peek();
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') {
                key.push_back(c);
                ++pos_;
            } else {
                break;
            }
        }
        if (key.empty()) throw TomlError(line_, "expected a key");
        return key;
    }

    std::vector<std::string> parse_dotted_key() {
        std::vector<std::string> parts;
        parts.push_back(parse_bare_key());
        skip_spaces();
        while (!at_end() && peek() == '.') {
            advance();
            skip_spaces();
            parts.push_back(parse_bare_key());
            skip_spaces();
        }
        return parts;
    }

    json* open_table(json& root) {
        advance();  // '['
        skip_spaces();
        const std::vector<std::string> parts = parse_dotted_key();
        skip_spaces();
        if (at_end() || peek() != ']') throw TomlError(line_, "expected ']'");
        advance();
        expect_line_end();

        json* node = &root;
        for (const std::string& part : parts) {
            if (!node->contains(part)) (*node)[part] = json::object();
            node = &(*node)[part];
            if (!node->is_object()) {
                throw TomlError(line_, "'" + part + "' is already a value");
            }
        }
        return node;
    }

    void parse_key_value(json& table) {
        const std::vector<std::string> parts = parse_dotted_key();
        skip_spaces();
        if (at_end() || peek() != '=') throw TomlError(line_, "expected '='");
        advance();
        skip_spaces();
        const json value = parse_value();
        expect_line_end();

        json* node = &table;
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
            if (!node->contains(parts[i])) (*node)[parts[i]] = json::object();
            node = &(*node)[parts[i]];
            if (!node->is_object()) {
                throw TomlError(line_, "'" + parts[i] + "' is already a value");
            }
        }
        const std::string& leaf = parts.back();
        if (node->contains(leaf)) {
            throw TomlError(line_, "duplicate key '" + leaf + "'");
        }
        (*node)[leaf] = value;
    }

    json parse_value() {
        if (at_end()) throw TomlError(line_, "expected a value");
        const char c = peek();
        if (c == '"') return parse_string();
        if (c == '[') return parse_array();
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+') {
            return parse_number();
        }
        const std::string word = parse_bare_key();
        if (word == "true") return json(true);
        if (word == "false") return json(false);
        throw TomlError(line_, "unrecognized value '" + word + "'");
    }

    json parse_string() {
        advance();  // opening quote
        std::string out;
        while (true) {
            if (at_end()) throw TomlError(line_, "unterminated string");
            const char c = advance();
            if (c == '"') break;
            if (c == '\n') throw TomlError(line_ - 1, "newline in string");
            if (c == '\\') {
                if (at_end()) throw TomlError(line_, "dangling escape");
                const char esc = advance();
                switch (esc) {
                    case '"': out.push_back('"'); break;
                    case '\\': out.push_back('\\'); break;
                    case 'n': out.push_back('\n'); break;
                    case 't': out.push_back('\t'); break;
                    case 'r': out.push_back('\r'); break;
                    default:
                        throw TomlError(line_, std::string("unsupported escape \\") + esc);
                }
            } else {
                out.push_back(c);
            }
        }
        return json(out);
    }

    json parse_number() {
        std::string token;
        while (!at_end()) {
            const char c = peek();
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' ||
                c == '.' || c == 'e' || c == 'E' || c == '_') {
                if (c != '_') token.push_back(c);
                ++pos_;
            } else {
                break;
            }
        }
        const bool is_float = token.find_first_of(".eE") != std::string::npos;
        try {
            if (is_float) return json(std::stod(token));
            return json(static_cast<std::int64_t>(std::stoll(token)));
        } catch (...) {
            throw TomlError(line_, "bad number '" + token + "'");
        }
    }

    json parse_array() {
        advance();  // '['
        json arr = json::array();
        while (true) {
            skip_ws_and_comments();
            if (at_end()) throw TomlError(line_, "unterminated array");
            if (peek() == ']') {
                advance();
                break;
            }
            arr.push_back(parse_value());
            skip_ws_and_comments();
            if (at_end()) throw TomlError(line_, "unterminated array");
            if (peek() == ',') {
                advance();
            } else if (peek() != ']') {
                throw TomlError(line_, "expected ',' or ']' in array");
            }
        }
        return arr;
    }

    const std::string& text_;
    std::size_t pos_ = 0;
    int line_ = 1;
};

}  // namespace

json parse_toml(const std::string& text) { return Parser(text).parse(); }

json parse_toml_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open TOML file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_toml(ss.str());
}

}  // namespace petgrid
