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

#ifndef PETGRID_FUSION_REF_HPP
#define PETGRID_FUSION_REF_HPP

#include <string>
#include <vector>

#include "petgrid/focal_prompt.hpp"
#include "petgrid/volume.hpp"

namespace petgrid {

struct IndivisibleDims : Error {
    IndivisibleDims() : Error("grid dims are not divisible by the patch size") {}
};

struct TokenCountMismatch : Error {
    TokenCountMismatch()
        : Error("global and focal token grids differ; choose focal dims so the "
                "focal patch grid matches the global one") {}
};

struct IndivisibleTokens : Error {
    IndivisibleTokens() : Error("token grid is not divisible by the pool factor") {}
};

/// Non-overlapping 3D patch layout. K = prod(dims / patch_size).
struct PatchSpec {
    Index3 patch_size{16, 16, 16};
    int embed_dim = 64;

    std::int64_t patch_volume() const {
        return patch_size[0] * patch_size[1] * patch_size[2];
    }
};

/// Row-major K x cols token matrix, with the 3D token-grid shape retained
/// for pooling. Tokens are computed and held in double precision; the
/// on-disk token format truncates to float32.
struct TokenMatrix {
    Index3 token_grid{0, 0, 0};
    int cols = 0;
    std::vector<double> data;  // rows() * cols

    std::int64_t rows() const {
        return token_grid[0] * token_grid[1] * token_grid[2];
    }
    double at(std::int64_t row, int col) const {
        return data[static_cast<std::size_t>(row) * cols + col];
    }
};

/// Fixed reference weights, all generated from one seed by UniformRng in a
/// documented order (global projection, focal projection, mask table, encoder
/// stub source, projector). The encoder stub is the Q factor of a seeded
/// random matrix, sign-normalized, so it is orthogonal; the mask table has
/// mask_table_bins + 1 rows with row 0 pinned to zero, looked up by linear
/// interpolation on patch occupancy.
struct RefWeights {
    int embed_dim = 0;        // d
    int proj_dim = 0;         // d_lm
    std::int64_t global_patch_volume = 0;
    std::int64_t focal_patch_volume = 0;
    int mask_table_bins = 32;

    std::vector<double> patch_projection_global;  // global_patch_volume x d
    std::vector<double> patch_projection_focal;   // focal_patch_volume x d
    std::vector<double> mask_embed_table;         // (bins + 1) x d
    std::vector<double> encoder_stub;             // d x d, orthogonal
    std::vector<double> projector;                // 2d x proj_dim

    static RefWeights generate(std::uint64_t seed, std::int64_t global_patch_volume,
                               std::int64_t focal_patch_volume, int embed_dim,
                               int proj_dim, int mask_table_bins = 32);
};

/// Focal patch size that makes the focal token grid equal the global one;
/// throws TokenCountMismatch if no integral patch size exists.
Index3 derive_focal_patch(const Index3& global_dims, const Index3& global_patch,
                          const Index3& focal_dims);

/// K x d tokens: row k is the flattened patch k (row-major over the token
/// grid and within the patch, height fastest) times the projection.
TokenMatrix patch_embed(const Volume3D& v, const PatchSpec& spec,
                        const std::vector<double>& projection);

/// K x d mask-conditioning tokens from per-patch occupancy fractions; empty
/// patches map to the zero vector.
TokenMatrix mask_embed(const LesionMask& m, const PatchSpec& spec,
                       const RefWeights& w);

/// Full fused encoding: stub(Z_pet + mask tokens) and stub(Z_ct) concatenated
/// along the embedding dim for the global grid, likewise for the focal crops,
/// then summed. Output is K x 2d.
TokenMatrix encode_fuse(const Volume3D& pet, const Volume3D& ct,
                        const LesionMask& mask, const FocalCrop& focal,
                        const PatchSpec& spec, const RefWeights& w);

/// Mean over pool_factor^3 blocks of the token grid, then projection to
/// proj_dim columns. pool_factor 1 keeps every token.
TokenMatrix pool_project(const TokenMatrix& t, const RefWeights& w, int pool_factor);

/// Little-endian flat binary token file: uint32 K, uint32 cols, then
/// K * cols float32 values, row-major.
void write_tokens(const TokenMatrix& t, const std::string& path);
TokenMatrix read_tokens(const std::string& path);

}  // namespace petgrid

#endif  // PETGRID_FUSION_REF_HPP
