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

#include "petgrid/fusion_ref.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <fstream>

namespace petgrid {

namespace {

using MatrixRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

void fill_uniform(std::vector<double>& dst, UniformRng& rng, double bound) {
    for (double& x : dst) x = (2.0 * rng.next_double() - 1.0) * bound;
}

Index3 token_grid_for(const Index3& dims, const Index3& patch) {
    Index3 grid;
    for (int a = 0; a < 3; ++a) {
        if (patch[a] <= 0 || dims[a] % patch[a] != 0) throw IndivisibleDims();
        grid[a] = dims[a] / patch[a];
    }
    return grid;
}

}  // namespace

RefWeights RefWeights::generate(std::uint64_t seed, std::int64_t global_patch_volume,
                                std::int64_t focal_patch_volume, int embed_dim,
                                int proj_dim, int mask_table_bins) {
    if (embed_dim <= 0 || proj_dim <= 0 || mask_table_bins <= 0 ||
        global_patch_volume <= 0 || focal_patch_volume <= 0) {
        throw Error("RefWeights dimensions must be positive");
    }
    RefWeights w;
    w.embed_dim = embed_dim;
    w.proj_dim = proj_dim;
    w.global_patch_volume = global_patch_volume;
    w.focal_patch_volume = focal_patch_volume;
    w.mask_table_bins = mask_table_bins;

    UniformRng rng(seed);
    const int d = embed_dim;

    w.patch_projection_global.resize(static_cast<std::size_t>(global_patch_volume) * d);
    fill_uniform(w.patch_projection_global, rng,
                 std::sqrt(3.0 / static_cast<double>(global_patch_volume)));

    w.patch_projection_focal.resize(static_cast<std::size_t>(focal_patch_volume) * d);
    fill_uniform(w.patch_projection_focal, rng,
                 std::sqrt(3.0 / static_cast<double>(focal_patch_volume)));

    w.mask_embed_table.assign(static_cast<std::size_t>(mask_table_bins + 1) * d, 0.0);
    {
        // Row 0 stays zero: empty patches must map to the zero vector.
        std::vector<double> rows(static_cast<std::size_t>(mask_table_bins) * d);
        fill_uniform(rows, rng, 1.0 / std::sqrt(static_cast<double>(d)));
        std::copy(rows.begin(), rows.end(), w.mask_embed_table.begin() + d);
    }

    {
        std::vector<double> source(static_cast<std::size_t>(d) * d);
        fill_uniform(source, rng, 1.0);
        Eigen::MatrixXd src(d, d);
        for (int r = 0; r < d; ++r) {
            for (int c = 0; c < d; ++c) {
                src(r, c) = source[static_cast<std::size_t>(r) * d + c];
            }
        }
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(src);
        Eigen::MatrixXd q = qr.householderQ();
        const Eigen::MatrixXd r_mat = qr.matrixQR().triangularView<Eigen::Upper>();
        for (int c = 0; c < d; ++c) {
            if (r_mat(c, c) < 0.0) q.col(c) *= -1.0;
        }
        w.encoder_stub.resize(static_cast<std::size_t>(d) * d);
        for (int r = 0; r < d; ++r) {
            for (int c = 0; c < d; ++c) {
                w.encoder_stub[static_cast<std::size_t>(r) * d + c] = q(r, c);
            }
        }
    }

    w.projector.resize(static_cast<std::size_t>(2 * d) * proj_dim);
    fill_uniform(w.projector, rng, std::sqrt(3.0 / static_cast<double>(2 * d)));
    return w;
}

Index3 derive_focal_patch(const Index3& global_dims, const Index3& global_patch,
                          const Index3& focal_dims) {
    const Index3 grid = token_grid_for(global_dims, global_patch);
    Index3 focal_patch;
    for (int a = 0; a < 3; ++a) {
        if (focal_dims[a] % grid[a] != 0) throw TokenCountMismatch();
        focal_patch[a] = focal_dims[a] / grid[a];
    }
    return focal_patch;
}

TokenMatrix patch_embed(const Volume3D& v, const PatchSpec& spec,
                        const std::vector<double>& projection) {
    const Index3 grid = token_grid_for(v.dims(), spec.patch_size);
    const std::int64_t pv = spec.patch_volume();
    const int d = spec.embed_dim;
    if (static_cast<std::int64_t>(projection.size()) != pv * d) {
        throw Error("projection matrix does not match patch volume x embed dim");
    }

    TokenMatrix out;
    out.token_grid = grid;
    out.cols = d;
    out.data.assign(static_cast<std::size_t>(out.rows()) * d, 0.0);

    ConstMapRM proj(projection.data(), pv, d);

    // Gather patches into row blocks, then one GEMM per block.
    constexpr std::int64_t kBlockRows = 256;
    std::vector<double> block(static_cast<std::size_t>(kBlockRows * pv));
    const std::int64_t k_total = out.rows();

    std::int64_t k = 0;
    while (k < k_total) {
        const std::int64_t rows = std::min(kBlockRows, k_total - k);
        for (std::int64_t r = 0; r < rows; ++r) {
            const std::int64_t token = k + r;
            const std::int64_t th = token % grid[2];
            const std::int64_t tw = (token / grid[2]) % grid[1];
            const std::int64_t td = token / (grid[1] * grid[2]);
            double* dst = block.data() + r * pv;
            for (std::int64_t pd = 0; pd < spec.patch_size[0]; ++pd) {
                for (std::int64_t pw = 0; pw < spec.patch_size[1]; ++pw) {
                    const std::int64_t base = v.index(td * spec.patch_size[0] + pd,
                                                      tw * spec.patch_size[1] + pw,
                                                      th * spec.patch_size[2]);
                    const float* src = v.data().data() + base;
                    for (std::int64_t ph = 0; ph < spec.patch_size[2]; ++ph) {
                        *dst++ = static_cast<double>(src[ph]);
                    }
                }
            }
        }
        ConstMapRM in(block.data(), rows, pv);
        MapRM dst(out.data.data() + static_cast<std::size_t>(k) * d, rows, d);
        dst.noalias() = in * proj;
        k += rows;
    }
    return out;
}

TokenMatrix mask_embed(const LesionMask& m, const PatchSpec& spec,
                       const RefWeights& w) {
    const Index3 grid = token_grid_for(m.dims(), spec.patch_size);
    const int d = spec.embed_dim;
    if (w.embed_dim != d) throw Error("weights embed_dim differs from spec");

    TokenMatrix out;
    out.token_grid = grid;
    out.cols = d;
    out.data.assign(static_cast<std::size_t>(out.rows()) * d, 0.0);

    const double pv = static_cast<double>(spec.patch_volume());
    const int bins = w.mask_table_bins;

    std::int64_t token = 0;
    for (std::int64_t td = 0; td < grid[0]; ++td) {
        for (std::int64_t tw = 0; tw < grid[1]; ++tw) {
            for (std::int64_t th = 0; th < grid[2]; ++th, ++token) {
                std::int64_t cnt = 0;
                for (std::int64_t pd = 0; pd < spec.patch_size[0]; ++pd) {
                    for (std::int64_t pw = 0; pw < spec.patch_size[1]; ++pw) {
                        const std::int64_t base =
                            m.index(td * spec.patch_size[0] + pd,
                                    tw * spec.patch_size[1] + pw,
                                    th * spec.patch_size[2]);
                        for (std::int64_t ph = 0; ph < spec.patch_size[2]; ++ph) {
                            cnt += m.test(base + ph) ? 1 : 0;
                        }
                    }
                }
                if (cnt == 0) continue;  // zero row already in place
                const double occupancy = static_cast<double>(cnt) / pv;
                const double pos = occupancy * static_cast<double>(bins);
                const int i0 = std::min(static_cast<int>(pos), bins - 1);
                const double f = pos - static_cast<double>(i0);
                const double* row0 = w.mask_embed_table.data() +
                                     static_cast<std::size_t>(i0) * d;
                const double* row1 = row0 + d;
                double* dst = out.data.data() + static_cast<std::size_t>(token) * d;
                for (int c = 0; c < d; ++c) {
                    dst[c] = (1.0 - f) * row0[c] + f * row1[c];
                }
            }
        }
    }
    return out;
}

namespace {

// rows x d in-place right-multiplication by the d x d stub.
void apply_stub(TokenMatrix& t, const RefWeights& w) {
    const int d = w.embed_dim;
    ConstMapRM stub(w.encoder_stub.data(), d, d);
    MapRM m(t.data.data(), t.rows(), d);
    m = m * stub;
}

void add_inplace(TokenMatrix& a, const TokenMatrix& b) {
    if (a.token_grid != b.token_grid || a.cols != b.cols) {
        throw TokenCountMismatch();
    }
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

// [left | right] along the embedding dimension.
TokenMatrix concat_cols(const TokenMatrix& left, const TokenMatrix& right) {
    if (left.token_grid != right.token_grid) throw TokenCountMismatch();
    TokenMatrix out;
    out.token_grid = left.token_grid;
    out.cols = left.cols + right.cols;
    out.data.resize(static_cast<std::size_t>(out.rows()) * out.cols);
    for (std::int64_t r = 0; r < out.rows(); ++r) {
        double* dst = out.data.data() + static_cast<std::size_t>(r) * out.cols;
        std::memcpy(dst, left.data.data() + static_cast<std::size_t>(r) * left.cols,
                    static_cast<std::size_t>(left.cols) * sizeof(double));
        std::memcpy(dst + left.cols,
                    right.data.data() + static_cast<std::size_t>(r) * right.cols,
                    static_cast<std::size_t>(right.cols) * sizeof(double));
    }
    return out;
}

TokenMatrix encode_pair(const Volume3D& pet, const Volume3D& ct,
                        const LesionMask& mask, const PatchSpec& spec,
                        const std::vector<double>& projection, const RefWeights& w) {
    TokenMatrix z_pet = patch_embed(pet, spec, projection);
    const TokenMatrix cond = mask_embed(mask, spec, w);
    add_inplace(z_pet, cond);
    apply_stub(z_pet, w);

    TokenMatrix z_ct = patch_embed(ct, spec, projection);
    apply_stub(z_ct, w);
    return concat_cols(z_pet, z_ct);
}

}  // namespace

TokenMatrix encode_fuse(const Volume3D& pet, const Volume3D& ct,
                        const LesionMask& mask, const FocalCrop& focal,
                        const PatchSpec& spec, const RefWeights& w) {
    if (pet.dims() != ct.dims() || pet.dims() != mask.dims()) {
        throw Error("encode_fuse: global grids are not aligned");
    }
    if (spec.embed_dim != w.embed_dim) throw Error("weights embed_dim differs from spec");
    if (spec.patch_volume() != w.global_patch_volume) {
        throw Error("weights were generated for a different global patch size");
    }

    TokenMatrix global = encode_pair(pet, ct, mask, spec,
                                     w.patch_projection_global, w);

    const Index3 focal_patch =
        derive_focal_patch(pet.dims(), spec.patch_size, focal.pet_crop.dims());
    PatchSpec focal_spec{focal_patch, spec.embed_dim};
    if (focal_spec.patch_volume() != w.focal_patch_volume) {
        throw Error("weights were generated for a different focal patch size");
    }
    const TokenMatrix focal_tokens =
        encode_pair(focal.pet_crop, focal.ct_crop, focal.mask_crop, focal_spec,
                    w.patch_projection_focal, w);

    add_inplace(global, focal_tokens);
    return global;
}

TokenMatrix pool_project(const TokenMatrix& t, const RefWeights& w, int pool_factor) {
    if (pool_factor < 1) throw Error("pool_factor must be >= 1");
    if (t.cols != 2 * w.embed_dim) {
        throw Error("pool_project expects fused tokens of width 2 * embed_dim");
    }
    Index3 pooled_grid;
    for (int a = 0; a < 3; ++a) {
        if (t.token_grid[a] % pool_factor != 0) throw IndivisibleTokens();
        pooled_grid[a] = t.token_grid[a] / pool_factor;
    }

    TokenMatrix pooled;
    pooled.token_grid = pooled_grid;
    pooled.cols = t.cols;
    pooled.data.assign(static_cast<std::size_t>(pooled.rows()) * t.cols, 0.0);

    const double inv =
        1.0 / (static_cast<double>(pool_factor) * pool_factor * pool_factor);
    std::int64_t out_row = 0;
    for (std::int64_t pd = 0; pd < pooled_grid[0]; ++pd) {
        for (std::int64_t pw = 0; pw < pooled_grid[1]; ++pw) {
            for (std::int64_t ph = 0; ph < pooled_grid[2]; ++ph, ++out_row) {
                double* dst = pooled.data.data() +
                              static_cast<std::size_t>(out_row) * t.cols;
                for (std::int64_t dd = 0; dd < pool_factor; ++dd) {
                    for (std::int64_t dw = 0; dw < pool_factor; ++dw) {
                        for (std::int64_t dh = 0; dh < pool_factor; ++dh) {
                            const std::int64_t src_row =
                                ((pd * pool_factor + dd) * t.token_grid[1] +
                                 (pw * pool_factor + dw)) *
                                    t.token_grid[2] +
                                (ph * pool_factor + dh);
                            const double* src =
                                t.data.data() +
                                static_cast<std::size_t>(src_row) * t.cols;
                            for (int c = 0; c < t.cols; ++c) dst[c] += src[c];
                        }
                    }
                }
                for (int c = 0; c < t.cols; ++c) dst[c] *= inv;
            }
        }
    }

    TokenMatrix out;
    out.token_grid = pooled_grid;
    out.cols = w.proj_dim;
    out.data.assign(static_cast<std::size_t>(out.rows()) * w.proj_dim, 0.0);
    ConstMapRM proj(w.projector.data(), 2 * w.embed_dim, w.proj_dim);
    ConstMapRM src(pooled.data.data(), pooled.rows(), pooled.cols);
    MapRM dst(out.data.data(), out.rows(), out.cols);
    dst.noalias() = src * proj;
    return out;
}

void write_tokens(const TokenMatrix& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write token file: " + path);
    const std::uint32_t k = static_cast<std::uint32_t>(t.rows());
    const std::uint32_t cols = static_cast<std::uint32_t>(t.cols);
    out.write(reinterpret_cast<const char*>(&k), 4);
    out.write(reinterpret_cast<const char*>(&cols), 4);
    std::vector<float> payload(t.data.size());
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        payload[i] = static_cast<float>(t.data[i]);
    }
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out) throw Error("short write to token file: " + path);
}

TokenMatrix read_tokens(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read token file: " + path);
    std::uint32_t k = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&k), 4);
    in.read(reinterpret_cast<char*>(&cols), 4);
    if (!in) throw Error("truncated token file header: " + path);
    std::vector<float> payload(static_cast<std::size_t>(k) * cols);
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!in) throw Error("truncated token file payload: " + path);
    TokenMatrix t;
    t.token_grid = {static_cast<std::int64_t>(k), 1, 1};
    t.cols = static_cast<int>(cols);
    t.data.assign(payload.begin(), payload.end());
    return t;
}

}  // namespace petgrid
