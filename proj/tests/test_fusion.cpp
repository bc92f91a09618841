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

#include <cmath>

#include "doctest.h"
#include "petgrid/fusion_ref.hpp"
#include "test_helpers.hpp"

using namespace petgrid;
using petgrid::testing::make_volume;
using petgrid::testing::TempDir;

namespace {

// ---- straight-line reference of the full encoding chain ----------------
// Written as direct nested loops over the published formula sequence, with
// no shared code with the library implementation.

std::vector<double> naive_patch_embed(const Volume3D& v, const Index3& patch,
                                      const std::vector<double>& proj, int d) {
    const Index3 grid = {v.dims()[0] / patch[0], v.dims()[1] / patch[1],
                         v.dims()[2] / patch[2]};
    const std::int64_t pv = patch[0] * patch[1] * patch[2];
    const std::int64_t k_total = grid[0] * grid[1] * grid[2];
    std::vector<double> out(static_cast<std::size_t>(k_total) * d, 0.0);
    std::int64_t token = 0;
    for (std::int64_t td = 0; td < grid[0]; ++td) {
        for (std::int64_t tw = 0; tw < grid[1]; ++tw) {
            for (std::int64_t th = 0; th < grid[2]; ++th, ++token) {
                for (int c = 0; c < d; ++c) {
                    double acc = 0.0;
                    std::int64_t flat = 0;
                    for (std::int64_t pd = 0; pd < patch[0]; ++pd) {
                        for (std::int64_t pw = 0; pw < patch[1]; ++pw) {
                            for (std::int64_t ph = 0; ph < patch[2]; ++ph, ++flat) {
                                const double value = v.at(td * patch[0] + pd,
                                                          tw * patch[1] + pw,
                                                          th * patch[2] + ph);
                                acc += value * proj[flat * d + c];
                            }
                        }
                    }
                    out[static_cast<std::size_t>(token) * d + c] = acc;
                }
            }
        }
    }
    return out;
}

std::vector<double> naive_mask_rows(const LesionMask& m, const Index3& patch,
                                    const RefWeights& w) {
    const Index3 grid = {m.dims()[0] / patch[0], m.dims()[1] / patch[1],
                         m.dims()[2] / patch[2]};
    const int d = w.embed_dim;
    const double pv = static_cast<double>(patch[0] * patch[1] * patch[2]);
    std::vector<double> out(
        static_cast<std::size_t>(grid[0] * grid[1] * grid[2]) * d, 0.0);
    std::int64_t token = 0;
    for (std::int64_t td = 0; td < grid[0]; ++td) {
        for (std::int64_t tw = 0; tw < grid[1]; ++tw) {
            for (std::int64_t th = 0; th < grid[2]; ++th, ++token) {
                std::int64_t cnt = 0;
                for (std::int64_t pd = 0; pd < patch[0]; ++pd) {
                    for (std::int64_t pw = 0; pw < patch[1]; ++pw) {
                        for (std::int64_t ph = 0; ph < patch[2]; ++ph) {
                            cnt += m.test(td * patch[0] + pd, tw * patch[1] + pw,
                                          th * patch[2] + ph)
                                       ? 1
                                       : 0;
                        }
                    }
                }
                const double pos = (static_cast<double>(cnt) / pv) *
                                   static_cast<double>(w.mask_table_bins);
                const int lo = std::min(static_cast<int>(pos), w.mask_table_bins - 1);
                const double f = pos - lo;
                for (int c = 0; c < d; ++c) {
                    const double a = w.mask_embed_table[static_cast<std::size_t>(lo) * d + c];
                    const double b =
                        w.mask_embed_table[static_cast<std::size_t>(lo + 1) * d + c];
                    out[static_cast<std::size_t>(token) * d + c] =
                        cnt == 0 ? 0.0 : (1.0 - f) * a + f * b;
                }
            }
        }
    }
    return out;
}

std::vector<double> naive_matmul(const std::vector<double>& a, std::int64_t rows,
                                 int inner, const std::vector<double>& b, int cols) {
    std::vector<double> out(static_cast<std::size_t>(rows) * cols, 0.0);
    for (std::int64_t r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (int i = 0; i < inner; ++i) {
                acc += a[static_cast<std::size_t>(r) * inner + i] *
                       b[static_cast<std::size_t>(i) * cols + c];
            }
            out[static_cast<std::size_t>(r) * cols + c] = acc;
        }
    }
    return out;
}

std::vector<double> naive_encode_pair(const Volume3D& pet, const Volume3D& ct,
                                      const LesionMask& mask, const Index3& patch,
                                      const std::vector<double>& proj,
                                      const RefWeights& w) {
    const int d = w.embed_dim;
    const std::int64_t k = (pet.dims()[0] / patch[0]) * (pet.dims()[1] / patch[1]) *
                           (pet.dims()[2] / patch[2]);
    std::vector<double> z_pet = naive_patch_embed(pet, patch, proj, d);
    const std::vector<double> cond = naive_mask_rows(mask, patch, w);
    for (std::size_t i = 0; i < z_pet.size(); ++i) z_pet[i] += cond[i];
    const std::vector<double> x_pet = naive_matmul(z_pet, k, d, w.encoder_stub, d);
    const std::vector<double> z_ct = naive_patch_embed(ct, patch, proj, d);
    const std::vector<double> x_ct = naive_matmul(z_ct, k, d, w.encoder_stub, d);

    std::vector<double> out(static_cast<std::size_t>(k) * 2 * d, 0.0);
    for (std::int64_t r = 0; r < k; ++r) {
        for (int c = 0; c < d; ++c) {
            out[static_cast<std::size_t>(r) * 2 * d + c] =
                x_pet[static_cast<std::size_t>(r) * d + c];
            out[static_cast<std::size_t>(r) * 2 * d + d + c] =
                x_ct[static_cast<std::size_t>(r) * d + c];
        }
    }
    return out;
}

std::vector<double> naive_full_chain(const Volume3D& pet, const Volume3D& ct,
                                     const LesionMask& mask, const FocalCrop& focal,
                                     const PatchSpec& spec, const RefWeights& w) {
    std::vector<double> global = naive_encode_pair(pet, ct, mask, spec.patch_size,
                                                   w.patch_projection_global, w);
    const Index3 grid = {pet.dims()[0] / spec.patch_size[0],
                         pet.dims()[1] / spec.patch_size[1],
                         pet.dims()[2] / spec.patch_size[2]};
    const Index3 focal_patch = {focal.pet_crop.dims()[0] / grid[0],
                                focal.pet_crop.dims()[1] / grid[1],
                                focal.pet_crop.dims()[2] / grid[2]};
    const std::vector<double> focal_x =
        naive_encode_pair(focal.pet_crop, focal.ct_crop, focal.mask_crop,
                          focal_patch, w.patch_projection_focal, w);
    for (std::size_t i = 0; i < global.size(); ++i) global[i] += focal_x[i];
    return global;
}

FocalCrop make_focal_fixture(const Index3& dims, float pet_fill, float ct_fill,
                             bool with_mask) {
    FocalCrop fc{{0.0, 0.0, 0.0},
                 static_cast<double>(dims[0]),
                 {0, 0, 0},
                 dims[0],
                 make_volume(dims, pet_fill),
                 make_volume(dims, ct_fill, Modality::CT),
                 LesionMask(dims),
                 dims};
    if (with_mask) {
        for (std::int64_t d = 0; d < dims[0] / 2; ++d) {
            for (std::int64_t w = 0; w < dims[1] / 2; ++w) {
                for (std::int64_t h = 0; h < dims[2] / 2; ++h) {
                    fc.mask_crop.set(d, w, h);
                }
            }
        }
    }
    return fc;
}

Volume3D random_volume(const Index3& dims, std::uint64_t seed, double lo = 0.0,
                       double hi = 10.0) {
    Volume3D v = make_volume(dims);
    UniformRng rng(seed);
    for (std::int64_t i = 0; i < v.size(); ++i) {
        v[i] = static_cast<float>(rng.next_double(lo, hi));
    }
    return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("patch_embed of a zero volume is the zero matrix") {
    const PatchSpec spec{{4, 4, 4}, 8};
    const RefWeights w = RefWeights::generate(5, spec.patch_volume(), 8, 8, 8);
    const TokenMatrix t = patch_embed(make_volume({8, 8, 8}), spec,
                                      w.patch_projection_global);
    CHECK(t.rows() == 8);
    for (double x : t.data) CHECK(x == 0.0);
}

TEST_CASE("paper-default dims give exactly 3168 global tokens") {
    const PatchSpec spec{{16, 16, 16}, 4};
    const RefWeights w = RefWeights::generate(7, spec.patch_volume(), 8, 4, 4);
    const Volume3D v = make_volume({192, 192, 352}, 0.5f);
    const TokenMatrix t = patch_embed(v, spec, w.patch_projection_global);
    CHECK(t.rows() == 3168);
    CHECK(t.token_grid == Index3{12, 12, 22});
}

TEST_CASE("patch_embed rejects indivisible dims") {
    const PatchSpec spec{{5, 4, 4}, 8};
    const RefWeights w = RefWeights::generate(5, spec.patch_volume(), 8, 8, 8);
    CHECK_THROWS_AS(patch_embed(make_volume({8, 8, 8}), spec,
                                w.patch_projection_global),
                    IndivisibleDims);
}

TEST_CASE("a one-hot voxel selects a single projection row") {
    const PatchSpec spec{{4, 4, 4}, 8};
    const RefWeights w = RefWeights::generate(11, spec.patch_volume(), 8, 8, 8);
    Volume3D v = make_volume({8, 8, 8});
    v.at(1, 2, 3) = 1.0f;  // patch 0, flat offset (1*4 + 2)*4 + 3 = 27
    const TokenMatrix t = patch_embed(v, spec, w.patch_projection_global);
    for (int c = 0; c < 8; ++c) {
        CHECK(t.at(0, c) == doctest::Approx(w.patch_projection_global[27 * 8 + c])
                                .epsilon(1e-12));
    }
    for (std::int64_t r = 1; r < t.rows(); ++r) {
        for (int c = 0; c < 8; ++c) CHECK(t.at(r, c) == 0.0);
    }
}

TEST_CASE("patch_embed is linear") {
    const PatchSpec spec{{4, 4, 4}, 8};
    const RefWeights w = RefWeights::generate(13, spec.patch_volume(), 8, 8, 8);
    const Volume3D u = random_volume({8, 8, 8}, 1);
    const Volume3D v = random_volume({8, 8, 8}, 2);
    Volume3D combo = make_volume({8, 8, 8});
    for (std::int64_t i = 0; i < combo.size(); ++i) {
        combo[i] = 2.0f * u[i] + 3.0f * v[i];
    }
    const TokenMatrix tu = patch_embed(u, spec, w.patch_projection_global);
    const TokenMatrix tv = patch_embed(v, spec, w.patch_projection_global);
    const TokenMatrix tc = patch_embed(combo, spec, w.patch_projection_global);
    for (std::size_t i = 0; i < tc.data.size(); ++i) {
        CHECK(tc.data[i] ==
              doctest::Approx(2.0 * tu.data[i] + 3.0 * tv.data[i]).epsilon(1e-6));
    }
}

TEST_CASE("mask_embed endpoints and half occupancy") {
    const PatchSpec spec{{4, 4, 4}, 8};
    const RefWeights w = RefWeights::generate(17, spec.patch_volume(), 8, 8, 8);
    const Index3 dims{8, 8, 8};

    const TokenMatrix empty = mask_embed(LesionMask(dims), spec, w);
    for (double x : empty.data) CHECK(x == 0.0);

    LesionMask full(dims);
    for (std::int64_t i = 0; i < full.size(); ++i) full.set(i);
    const TokenMatrix t_full = mask_embed(full, spec, w);
    const int d = 8;
    for (std::int64_t r = 0; r < t_full.rows(); ++r) {
        for (int c = 0; c < d; ++c) {
            const double last_row =
                w.mask_embed_table[static_cast<std::size_t>(w.mask_table_bins) * d + c];
            CHECK(t_full.at(r, c) == doctest::Approx(last_row).epsilon(1e-12));
        }
    }

    // Fill exactly half of patch 0 (the first 32 of its 64 voxels).
    LesionMask half(dims);
    int placed = 0;
    for (std::int64_t pd = 0; pd < 4 && placed < 32; ++pd) {
        for (std::int64_t pw = 0; pw < 4 && placed < 32; ++pw) {
            for (std::int64_t ph = 0; ph < 4 && placed < 32; ++ph) {
                half.set(pd, pw, ph);
                ++placed;
            }
        }
    }
    const TokenMatrix t_half = mask_embed(half, spec, w);
    for (int c = 0; c < d; ++c) {
        const double mid_row =
            w.mask_embed_table[static_cast<std::size_t>(w.mask_table_bins / 2) * d + c];
        CHECK(t_half.at(0, c) == doctest::Approx(mid_row).epsilon(1e-12));
    }
    for (std::int64_t r = 1; r < t_half.rows(); ++r) {
        for (int c = 0; c < d; ++c) CHECK(t_half.at(r, c) == 0.0);
    }
}

TEST_CASE("encoder stub is orthogonal and norm preserving") {
    const RefWeights w = RefWeights::generate(23, 64, 8, 16, 8);
    const int d = 16;
    // Q^T Q = I
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            double dot = 0.0;
            for (int r = 0; r < d; ++r) {
                dot += w.encoder_stub[static_cast<std::size_t>(r) * d + i] *
                       w.encoder_stub[static_cast<std::size_t>(r) * d + j];
            }
            CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-6));
        }
    }

    // Row norms of any input are preserved through the stub.
    UniformRng rng(4);
    std::vector<double> row(d);
    for (double& x : row) x = rng.next_double(-2.0, 2.0);
    double before = 0.0, after = 0.0;
    for (int c = 0; c < d; ++c) {
        double acc = 0.0;
        for (int i = 0; i < d; ++i) {
            acc += row[i] * w.encoder_stub[static_cast<std::size_t>(i) * d + c];
        }
        after += acc * acc;
        before += row[c] * row[c];
    }
    CHECK(std::sqrt(after) == doctest::Approx(std::sqrt(before)).epsilon(1e-5));
}

TEST_CASE("weights are reproducible from the seed") {
    const RefWeights a = RefWeights::generate(99, 64, 8, 16, 8);
    const RefWeights b = RefWeights::generate(99, 64, 8, 16, 8);
    CHECK(a.patch_projection_global == b.patch_projection_global);
    CHECK(a.patch_projection_focal == b.patch_projection_focal);
    CHECK(a.mask_embed_table == b.mask_embed_table);
    CHECK(a.encoder_stub == b.encoder_stub);
    CHECK(a.projector == b.projector);
    const RefWeights c = RefWeights::generate(100, 64, 8, 16, 8);
    CHECK(a.patch_projection_global != c.patch_projection_global);
}

TEST_CASE("encode_fuse matches the straight-line oracle") {
    const Index3 global_dims{32, 32, 32};
    const Index3 focal_dims{16, 16, 16};
    const PatchSpec spec{{16, 16, 16}, 8};

    for (std::uint64_t seed : {42ull, 43ull, 44ull}) {
        const RefWeights w =
            RefWeights::generate(seed, spec.patch_volume(), 8 * 8 * 8, 8, 6);
        const Volume3D pet = random_volume(global_dims, seed * 3 + 1);
        const Volume3D ct = random_volume(global_dims, seed * 3 + 2);
        LesionMask mask(global_dims);
        for (std::int64_t d = 10; d < 20; ++d) {
            for (std::int64_t ww = 10; ww < 18; ++ww) {
                for (std::int64_t h = 12; h < 17; ++h) mask.set(d, ww, h);
            }
        }
        FocalCrop focal = make_focal_fixture(focal_dims, 0.0f, 0.0f, true);
        focal.pet_crop = random_volume(focal_dims, seed * 3 + 3);
        focal.ct_crop = random_volume(focal_dims, seed * 3 + 4);

        const TokenMatrix got = encode_fuse(pet, ct, mask, focal, spec, w);
        const std::vector<double> want = naive_full_chain(pet, ct, mask, focal, spec, w);
        CHECK(got.rows() == 8);
        CHECK(got.cols == 16);
        CHECK(max_abs_diff(got.data, want) <= 1e-6);
    }
}

TEST_CASE("zero focal contribution leaves the global tokens unchanged") {
    const Index3 global_dims{32, 32, 32};
    const PatchSpec spec{{16, 16, 16}, 8};
    const RefWeights w = RefWeights::generate(3, spec.patch_volume(), 512, 8, 6);
    const Volume3D pet = random_volume(global_dims, 10);
    const Volume3D ct = random_volume(global_dims, 11);
    const LesionMask mask(global_dims);

    const FocalCrop zero_focal = make_focal_fixture({16, 16, 16}, 0.0f, 0.0f, false);
    const TokenMatrix fused = encode_fuse(pet, ct, mask, zero_focal, spec, w);
    const std::vector<double> global_only =
        naive_encode_pair(pet, ct, mask, spec.patch_size, w.patch_projection_global, w);
    CHECK(max_abs_diff(fused.data, global_only) <= 1e-9);
}

TEST_CASE("empty mask makes the PET and CT paths identical") {
    // With additive conditioning disabled (empty mask), running the same
    // volume through the PET and CT branches must give bitwise-equal blocks.
    const Index3 dims{32, 32, 32};
    const PatchSpec spec{{16, 16, 16}, 8};
    const RefWeights w = RefWeights::generate(31, spec.patch_volume(), 512, 8, 6);
    const Volume3D pet = random_volume(dims, 77);
    Volume3D ct = pet;
    ct.set_modality(Modality::CT);
    const LesionMask empty(dims);
    const FocalCrop focal = make_focal_fixture({16, 16, 16}, 1.0f, 1.0f, false);

    const TokenMatrix t = encode_fuse(pet, ct, empty, focal, spec, w);
    const int d = spec.embed_dim;
    for (std::int64_t r = 0; r < t.rows(); ++r) {
        for (int c = 0; c < d; ++c) {
            CHECK(t.at(r, c) == t.at(r, d + c));  // exact, not approximate
        }
    }

    // A nonempty mask must break the symmetry.
    LesionMask some(dims);
    some.set(0, 0, 0);
    const TokenMatrix t2 = encode_fuse(pet, ct, some, focal, spec, w);
    bool differs = false;
    for (int c = 0; c < d && !differs; ++c) {
        differs = t2.at(0, c) != t2.at(0, d + c);
    }
    CHECK(differs);
}

TEST_CASE("token count mismatch is rejected") {
    const PatchSpec spec{{16, 16, 16}, 8};
    const RefWeights w = RefWeights::generate(3, spec.patch_volume(), 512, 8, 6);
    const Volume3D pet = make_volume({32, 32, 32});
    const Volume3D ct = make_volume({32, 32, 32}, 0.0f, Modality::CT);
    const LesionMask mask(Index3{32, 32, 32});
    // 25 is not a multiple of the 2x2x2 token grid.
    const FocalCrop bad = make_focal_fixture({25, 25, 25}, 0.0f, 0.0f, false);
    CHECK_THROWS_AS(encode_fuse(pet, ct, mask, bad, spec, w), TokenCountMismatch);
}

TEST_CASE("pool_project block means and projection") {
    const int d = 4;  // embed_dim; fused width 8
    RefWeights w = RefWeights::generate(5, 8, 8, d, 3);

    TokenMatrix t;
    t.token_grid = {4, 4, 4};
    t.cols = 2 * d;
    t.data.resize(64 * 8);
    UniformRng rng(6);
    for (double& x : t.data) x = rng.next_double(-1.0, 1.0);

    const TokenMatrix v = pool_project(t, w, 2);
    CHECK(v.rows() == 8);
    CHECK(v.cols == 3);

    // Independent check: mean the 2x2x2 token blocks, then project.
    std::vector<double> pooled(8 * 8, 0.0);
    for (std::int64_t pd = 0; pd < 2; ++pd) {
        for (std::int64_t pw = 0; pw < 2; ++pw) {
            for (std::int64_t ph = 0; ph < 2; ++ph) {
                const std::int64_t out_row = (pd * 2 + pw) * 2 + ph;
                for (std::int64_t dd = 0; dd < 2; ++dd) {
                    for (std::int64_t dw = 0; dw < 2; ++dw) {
                        for (std::int64_t dh = 0; dh < 2; ++dh) {
                            const std::int64_t src =
                                ((pd * 2 + dd) * 4 + (pw * 2 + dw)) * 4 + ph * 2 + dh;
                            for (int c = 0; c < 8; ++c) {
                                pooled[static_cast<std::size_t>(out_row) * 8 + c] +=
                                    t.data[static_cast<std::size_t>(src) * 8 + c] / 8.0;
                            }
                        }
                    }
                }
            }
        }
    }
    const std::vector<double> want = naive_matmul(pooled, 8, 8, w.projector, 3);
    CHECK(max_abs_diff(v.data, want) <= 1e-9);

    SUBCASE("pool factor 1 is projection only") {
        const TokenMatrix v1 = pool_project(t, w, 1);
        const std::vector<double> want1 = naive_matmul(t.data, 64, 8, w.projector, 3);
        CHECK(max_abs_diff(v1.data, want1) <= 1e-9);
    }
    SUBCASE("constant rows are unchanged by pooling") {
        TokenMatrix c;
        c.token_grid = {2, 2, 2};
        c.cols = 2 * d;
        c.data.assign(8 * 8, 0.75);
        const TokenMatrix pooled_c = pool_project(c, w, 2);
        const std::vector<double> direct =
            naive_matmul(std::vector<double>(8, 0.75), 1, 8, w.projector, 3);
        for (int col = 0; col < 3; ++col) {
            CHECK(pooled_c.at(0, col) == doctest::Approx(direct[col]).epsilon(1e-12));
        }
    }
    SUBCASE("indivisible token grid is rejected") {
        TokenMatrix odd;
        odd.token_grid = {3, 4, 4};
        odd.cols = 2 * d;
        odd.data.assign(48 * 8, 0.0);
        CHECK_THROWS_AS(pool_project(odd, w, 2), IndivisibleTokens);
    }
}

TEST_CASE("token files round trip through the documented binary format") {
    TempDir tmp("tokens");
    TokenMatrix t;
    t.token_grid = {2, 3, 4};
    t.cols = 5;
    t.data.resize(24 * 5);
    UniformRng rng(12);
    for (double& x : t.data) x = rng.next_double(-4.0, 4.0);

    write_tokens(t, tmp.str("t.bin"));
    const TokenMatrix back = read_tokens(tmp.str("t.bin"));
    REQUIRE(back.rows() == t.rows());
    REQUIRE(back.cols == t.cols);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        // float32 truncation on disk
        CHECK(back.data[i] == doctest::Approx(t.data[i]).epsilon(1e-6));
    }
}
