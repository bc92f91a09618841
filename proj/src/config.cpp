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

#include "petgrid/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "petgrid/toml.hpp"

namespace petgrid {

namespace {

using nlohmann::json;

// Strict section reader: every key consumed must be declared, leftovers are
// reported with their section path.
class Section {
public:
    Section(const json& node, std::string path)
        : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) {
            throw ConfigInvalid("section '" + path_ + "' must be a table");
        }
    }

    template <typename T>
    void read(const char* key, T& out) {
        if (!node_.contains(key)) return;
        consumed_.insert(key);
        try {
            out = node_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigInvalid("key '" + path_ + "." + key + "' has the wrong type");
        }
    }

    void read_index3(const char* key, Index3& out) {
        if (!node_.contains(key)) return;
        consumed_.insert(key);
        const json& arr = node_.at(key);
        if (!arr.is_array() || arr.size() != 3) {
            throw ConfigInvalid("key '" + path_ + "." + key +
                                "' must be an array of 3 integers");
        }
        for (int a = 0; a < 3; ++a) {
            if (!arr[a].is_number_integer()) {
                throw ConfigInvalid("key '" + path_ + "." + key +
                                    "' must be an array of 3 integers");
            }
            out[a] = arr[a].get<std::int64_t>();
        }
    }

    void finish() const {
        for (const auto& [key, value] : node_.items()) {
            (void)value;
            if (!consumed_.contains(key)) {
                throw ConfigInvalid("unknown key '" + path_ + "." + key + "'");
            }
        }
    }

private:
    const json& node_;
    std::string path_;
    std::set<std::string> consumed_;
};

PipelineConfig from_tree(const json& root) {
    if (!root.is_object()) throw ConfigInvalid("top level must be a table");
    PipelineConfig cfg;
    std::set<std::string> known_sections;

    auto section = [&](const char* name) -> std::optional<Section> {
        known_sections.insert(name);
        if (!root.contains(name)) return std::nullopt;
        return Section(root.at(name), name);
    };

    if (auto s = section("grid")) {
        s->read("spacing", cfg.grid.target_spacing);
        s->read_index3("dims", cfg.grid.target_dims);
        s->finish();
    }
    if (auto s = section("seg")) {
        s->read("initial_fraction", cfg.seg.initial_fraction);
        s->read("suv_tolerance", cfg.seg.suv_tolerance);
        s->read("connectivity", cfg.seg.connectivity);
        s->read("refine_step", cfg.seg.refine_step);
        s->read("stabilize_eps", cfg.seg.stabilize_eps);
        s->read("max_iters", cfg.seg.max_iters);
        s->read("background_margin", cfg.seg.background_margin);
        s->finish();
    }
    if (auto s = section("perturb")) {
        s->read("fraction", cfg.perturb.fraction);
        s->read("seed", cfg.perturb.rng_seed);
        s->finish();
    }
    if (auto s = section("crop")) {
        s->read("margin_fraction", cfg.crop_margin_fraction);
        s->read("min_side", cfg.crop_min_side);
        s->read_index3("focal_dims", cfg.focal_dims);
        s->finish();
    }
    if (auto s = section("patch")) {
        s->read_index3("size", cfg.patch.patch_size);
        s->read("embed_dim", cfg.patch.embed_dim);
        s->read("proj_dim", cfg.proj_dim);
        s->read("pool_factor", cfg.pool_factor);
        s->read("weight_seed", cfg.weight_seed);
        s->read("mask_table_bins", cfg.mask_table_bins);
        s->finish();
    }
    if (auto s = section("paths")) {
        s->read("input", cfg.input_dir);
        s->read("output", cfg.output_dir);
        s->read("lexicon", cfg.lexicon_path);
        s->read("patterns", cfg.patterns_path);
        s->finish();
    }
    known_sections.insert("workers");
    if (root.contains("workers")) {
        if (!root.at("workers").is_number_integer()) {
            throw ConfigInvalid("key 'workers' must be an integer");
        }
        cfg.workers = root.at("workers").get<int>();
    }

    for (const auto& [key, value] : root.items()) {
        (void)value;
        if (!known_sections.contains(key)) {
            throw ConfigInvalid("unknown section or key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

}  // namespace

PipelineConfig PipelineConfig::from_json_text(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigInvalid(std::string("not valid JSON: ") + e.what());
    }
    return from_tree(root);
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    if (path.ends_with(".toml")) {
        return from_tree(parse_toml_file(path));
    }
    if (path.ends_with(".json")) {
        std::ifstream in(path);
        if (!in) throw ConfigInvalid("cannot open " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return from_json_text(ss.str());
    }
    throw ConfigInvalid("config file must end in .toml or .json: " + path);
}

void PipelineConfig::validate() const {
    if (!(grid.target_spacing > 0.0)) throw ConfigInvalid("grid.spacing must be > 0");
    for (int a = 0; a < 3; ++a) {
        if (grid.target_dims[a] <= 0) throw ConfigInvalid("grid.dims must be positive");
        if (focal_dims[a] <= 0) throw ConfigInvalid("crop.focal_dims must be positive");
        if (patch.patch_size[a] <= 0) throw ConfigInvalid("patch.size must be positive");
        if (grid.target_dims[a] % patch.patch_size[a] != 0) {
            throw ConfigInvalid("grid.dims must be divisible by patch.size");
        }
    }
    try {
        seg.validate();
        perturb.validate();
    } catch (const Error& e) {
        throw ConfigInvalid(e.what());
    }
    if (patch.embed_dim <= 0) throw ConfigInvalid("patch.embed_dim must be positive");
    if (proj_dim <= 0) throw ConfigInvalid("patch.proj_dim must be positive");
    if (pool_factor < 1) throw ConfigInvalid("patch.pool_factor must be >= 1");
    if (mask_table_bins < 1) throw ConfigInvalid("patch.mask_table_bins must be >= 1");
    if (!(crop_margin_fraction >= 0.0)) {
        throw ConfigInvalid("crop.margin_fraction must be >= 0");
    }
    if (!(crop_min_side >= 1.0)) throw ConfigInvalid("crop.min_side must be >= 1");
    if (workers < 1) throw ConfigInvalid("workers must be >= 1");

    // Focal token grid must match the global one for the fusion step.
    for (int a = 0; a < 3; ++a) {
        const std::int64_t tokens = grid.target_dims[a] / patch.patch_size[a];
        if (focal_dims[a] % tokens != 0) {
            throw ConfigInvalid(
                "crop.focal_dims must be a multiple of the global token grid " +
                index3_to_string({grid.target_dims[0] / patch.patch_size[0],
                                  grid.target_dims[1] / patch.patch_size[1],
                                  grid.target_dims[2] / patch.patch_size[2]}));
        }
        if ((grid.target_dims[a] / patch.patch_size[a]) % pool_factor != 0) {
            throw ConfigInvalid("token grid must be divisible by pool_factor");
        }
    }
}

}  // namespace petgrid
