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

#ifndef PETGRID_CONFIG_HPP
#define PETGRID_CONFIG_HPP

#include <string>

#include "petgrid/focal_prompt.hpp"
#include "petgrid/fusion_ref.hpp"
#include "petgrid/lesion_seg.hpp"
#include "petgrid/volume.hpp"

namespace petgrid {

struct ConfigInvalid : Error {
    explicit ConfigInvalid(const std::string& why)
        : Error("invalid config: " + why) {}
};

/// Pipeline configuration. The schema is strict: unknown sections or keys
/// are rejected rather than ignored. Files may be TOML (subset, see
/// toml.hpp) or JSON, chosen by extension.
///
/// Defaults pair the canonical grid (192 x 192 x 352, 16^3 patches) with
/// focal crops resampled to 96 x 96 x 176 (8^3 patches), so global and focal
/// token grids coincide as the fusion step requires. The standalone `crop`
/// subcommand keeps the 32^3 focal default; the pipeline needs the matched
/// dims to encode.
struct PipelineConfig {
    GridSpec grid;
    SegParams seg;
    PerturbSpec perturb{0.2, 0};

    // [crop]
    double crop_margin_fraction = 0.25;
    double crop_min_side = 16.0;
    Index3 focal_dims{96, 96, 176};

    // [patch]
    PatchSpec patch;
    int proj_dim = 64;
    int pool_factor = 2;
    std::uint64_t weight_seed = 17;
    int mask_table_bins = 32;

    // [paths]
    std::string input_dir;
    std::string output_dir;
    std::string lexicon_path;    // empty: built-in minimal lexicon is refused;
                                 // the pipeline requires an explicit lexicon
    std::string patterns_path;   // empty: compiled-in default inventory

    int workers = 1;

    static PipelineConfig load(const std::string& path);
    static PipelineConfig from_json_text(const std::string& json_text);

    void validate() const;
};

}  // namespace petgrid

#endif  // PETGRID_CONFIG_HPP
