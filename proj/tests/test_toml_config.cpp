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

#include <fstream>

#include "doctest.h"
#include "petgrid/config.hpp"
#include "petgrid/toml.hpp"
#include "test_helpers.hpp"

using namespace petgrid;
using petgrid::testing::TempDir;

TEST_CASE("toml subset: tables, scalars, arrays and comments") {
    const auto j = parse_toml(R"(
# grid setup
[grid]
spacing = 3.0
dims = [192, 192, 352]  # canonical

[seg]
initial_fraction = 0.5
max_iters = 50
enabled = true
label = "body \"weight\" suv"

[paths]
input = "exams"
)");
    CHECK(j.at("grid").at("spacing").get<double>() == 3.0);
    CHECK(j.at("grid").at("dims").size() == 3);
    CHECK(j.at("grid").at("dims")[2].get<int>() == 352);
    CHECK(j.at("seg").at("initial_fraction").get<double>() == 0.5);
    CHECK(j.at("seg").at("max_iters").get<int>() == 50);
    CHECK(j.at("seg").at("enabled").get<bool>() == true);
    CHECK(j.at("seg").at("label").get<std::string>() == "body \"weight\" suv");
    CHECK(j.at("paths").at("input").get<std::string>() == "exams");
}

TEST_CASE("toml subset: dotted keys, multiline arrays, negatives") {
    const auto j = parse_toml(R"(
grid.spacing = 1.5
values = [
  -1, 2,
  3,
]
big = 1_000
sci = 2.5e2
)");
    CHECK(j.at("grid").at("spacing").get<double>() == 1.5);
    CHECK(j.at("values").size() == 3);
    CHECK(j.at("values")[0].get<int>() == -1);
    CHECK(j.at("big").get<int>() == 1000);
    CHECK(j.at("sci").get<double>() == 250.0);
}

TEST_CASE("toml subset: malformed input is rejected with line numbers") {
    CHECK_THROWS_AS(parse_toml("key = "), Error);
    CHECK_THROWS_AS(parse_toml("[unclosed\n"), Error);
    CHECK_THROWS_AS(parse_toml("a = 1\na = 2\n"), Error);
    CHECK_THROWS_AS(parse_toml("s = \"unterminated\n"), Error);
    CHECK_THROWS_AS(parse_toml("x = nonsense\n"), Error);
    CHECK_THROWS_AS(parse_toml("arr = [1, 2\n"), Error);
}

TEST_CASE("pipeline config loads from TOML and JSON identically") {
    TempDir tmp("cfg");
    const char* toml_text = R"(
workers = 4
[grid]
spacing = 3.0
dims = [96, 96, 176]
[seg]
suv_tolerance = 0.1
[perturb]
fraction = 0.2
seed = 7
[crop]
focal_dims = [48, 48, 88]
[patch]
size = [8, 8, 8]
embed_dim = 32
[paths]
input = "in"
output = "out"
lexicon = "lex.tsv"
)";
    {
        std::ofstream f(tmp.str("cfg.toml"));
        f << toml_text;
    }
    const PipelineConfig a = PipelineConfig::load(tmp.str("cfg.toml"));
    CHECK(a.workers == 4);
    CHECK(a.grid.target_dims == Index3{96, 96, 176});
    CHECK(a.perturb.rng_seed == 7);
    CHECK(a.patch.embed_dim == 32);
    CHECK(a.focal_dims == Index3{48, 48, 88});
    CHECK(a.lexicon_path == "lex.tsv");

    const char* json_text = R"({
      "workers": 4,
      "grid": {"spacing": 3.0, "dims": [96, 96, 176]},
      "seg": {"suv_tolerance": 0.1},
      "perturb": {"fraction": 0.2, "seed": 7},
      "crop": {"focal_dims": [48, 48, 88]},
      "patch": {"size": [8, 8, 8], "embed_dim": 32},
      "paths": {"input": "in", "output": "out", "lexicon": "lex.tsv"}
    })";
    const PipelineConfig b = PipelineConfig::from_json_text(json_text);
    CHECK(b.workers == a.workers);
    CHECK(b.grid.target_dims == a.grid.target_dims);
    CHECK(b.patch.embed_dim == a.patch.embed_dim);
}

TEST_CASE("unknown keys and sections are rejected, not ignored") {
    CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"grid": {"spacin": 3.0}})"),
                    ConfigInvalid);
    CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"grids": {}})"), ConfigInvalid);
    CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"grid": {"dims": [1, 2]}})"),
                    ConfigInvalid);
    CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"workers": "many"})"),
                    ConfigInvalid);
}

TEST_CASE("config validation catches inconsistent geometry") {
    // dims not divisible by patch size
    CHECK_THROWS_AS(PipelineConfig::from_json_text(
                        R"({"grid": {"dims": [100, 96, 176]}, "patch": {"size": [16, 16, 16]}})"),
                    ConfigInvalid);
    // focal dims incompatible with the token grid
    CHECK_THROWS_AS(PipelineConfig::from_json_text(
                        R"({"grid": {"dims": [96, 96, 176]},
                            "patch": {"size": [8, 8, 8]},
                            "crop": {"focal_dims": [50, 48, 88]}})"),
                    ConfigInvalid);
    // bad segmentation fraction
    CHECK_THROWS_AS(PipelineConfig::from_json_text(
                        R"({"seg": {"initial_fraction": 1.5}})"),
                    ConfigInvalid);
}
