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

#include "petgrid/resample.hpp"

#include <cmath>

namespace petgrid {

namespace {

struct GridMap {
    Vec3 target_origin;
    Vec3 scale;   // target_spacing / source_spacing per axis
    Vec3 offset;  // (target_origin - source_origin) / source_spacing per axis
};

// Aligns the physical centers of the two grids; see resample() contract.
GridMap make_map(const Index3& src_dims, const Vec3& src_spacing,
                 const Vec3& src_origin, const GridSpec& g) {
    GridMap m;
    for (int a = 0; a < 3; ++a) {
        const double center_src =
            src_origin[a] + 0.5 * static_cast<double>(src_dims[a] - 1) * src_spacing[a];
        m.target_origin[a] = center_src -
            0.5 * static_cast<double>(g.target_dims[a] - 1) * g.target_spacing;
        m.scale[a] = g.target_spacing / src_spacing[a];
        m.offset[a] = (m.target_origin[a] - src_origin[a]) / src_spacing[a];
    }
    return m;
}

inline double sample_or_zero(const Volume3D& v, std::int64_t d, std::int64_t w,
                             std::int64_t h) {
    if (d < 0 || w < 0 || h < 0 || d >= v.dims()[0] || w >= v.dims()[1] ||
        h >= v.dims()[2]) {
        return 0.0;
    }
    return static_cast<double>(v.at(d, w, h));
}

}  // namespace

Volume3D resample(const Volume3D& v, const GridSpec& g) {
    const GridMap map = make_map(v.dims(), v.spacing(), v.origin(), g);
    Volume3D out(g.target_dims,
                 {g.target_spacing, g.target_spacing, g.target_spacing},
                 map.target_origin, v.modality());

    const Index3& td = g.target_dims;
    std::int64_t o = 0;
    for (std::int64_t d = 0; d < td[0]; ++d) {
        const double xd = map.offset[0] + static_cast<double>(d) * map.scale[0];
        const std::int64_t d0 = static_cast<std::int64_t>(std::floor(xd));
        const double fd = xd - static_cast<double>(d0);
        for (std::int64_t w = 0; w < td[1]; ++w) {
            const double xw = map.offset[1] + static_cast<double>(w) * map.scale[1];
            const std::int64_t w0 = static_cast<std::int64_t>(std::floor(xw));
            const double fw = xw - static_cast<double>(w0);
            for (std::int64_t h = 0; h < td[2]; ++h, ++o) {
                const double xh = map.offset[2] + static_cast<double>(h) * map.scale[2];
                const std::int64_t h0 = static_cast<std::int64_t>(std::floor(xh));
                const double fh = xh - static_cast<double>(h0);

                const double c000 = sample_or_zero(v, d0, w0, h0);
                const double c001 = sample_or_zero(v, d0, w0, h0 + 1);
                const double c010 = sample_or_zero(v, d0, w0 + 1, h0);
                const double c011 = sample_or_zero(v, d0, w0 + 1, h0 + 1);
                const double c100 = sample_or_zero(v, d0 + 1, w0, h0);
                const double c101 = sample_or_zero(v, d0 + 1, w0, h0 + 1);
                const double c110 = sample_or_zero(v, d0 + 1, w0 + 1, h0);
                const double c111 = sample_or_zero(v, d0 + 1, w0 + 1, h0 + 1);

                const double c00 = c000 + (c001 - c000) * fh;
                const double c01 = c010 + (c011 - c010) * fh;
                const double c10 = c100 + (c101 - c100) * fh;
                const double c11 = c110 + (c111 - c110) * fh;
                const double c0 = c00 + (c01 - c00) * fw;
                const double c1 = c10 + (c11 - c10) * fw;
                out[o] = static_cast<float>(c0 + (c1 - c0) * fd);
            }
        }
    }
    return out;
}

LesionMask resample_mask(const LesionMask& m, const Vec3& source_spacing,
                         const Vec3& source_origin, const GridSpec& g) {
    for (int a = 0; a < 3; ++a) {
        if (!(source_spacing[a] > 0.0)) throw Error("mask spacing must be positive");
    }
    const GridMap map = make_map(m.dims(), source_spacing, source_origin, g);
    LesionMask out(g.target_dims);

    const Index3& td = g.target_dims;
    for (std::int64_t d = 0; d < td[0]; ++d) {
        const std::int64_t sd =
            std::llround(map.offset[0] + static_cast<double>(d) * map.scale[0]);
        if (sd < 0 || sd >= m.dims()[0]) continue;
        for (std::int64_t w = 0; w < td[1]; ++w) {
            const std::int64_t sw =
                std::llround(map.offset[1] + static_cast<double>(w) * map.scale[1]);
            if (sw < 0 || sw >= m.dims()[1]) continue;
            for (std::int64_t h = 0; h < td[2]; ++h) {
                const std::int64_t sh =
                    std::llround(map.offset[2] + static_cast<double>(h) * map.scale[2]);
                if (sh < 0 || sh >= m.dims()[2]) continue;
                if (m.test(sd, sw, sh)) out.set(d, w, h);
            }
        }
    }
    if (!m.empty() && out.empty()) throw EmptyResult();
    return out;
}

std::int64_t map_depth_to_target(const Index3& src_dims, const Vec3& src_spacing,
                                 std::int64_t depth, const GridSpec& g) {
    const double center_src =
        0.5 * static_cast<double>(src_dims[0] - 1) * src_spacing[0];
    const double target_origin =
        center_src - 0.5 * static_cast<double>(g.target_dims[0] - 1) * g.target_spacing;
    const double phys = static_cast<double>(depth) * src_spacing[0];
    return std::llround((phys - target_origin) / g.target_spacing);
}

Volume3D suv_scale(const Volume3D& v, double injected_dose_bq, double weight_kg,
                   double decay_factor) {
    if (!(injected_dose_bq > 0.0)) throw NonPositiveDose();
    if (!(weight_kg > 0.0)) throw NonPositiveWeight();
    if (v.modality() != Modality::PET) throw NotPET();
    if (!(decay_factor > 0.0) || decay_factor > 1.0) {
        throw Error("decay factor must lie in (0, 1]");
    }
    const double factor = weight_kg * 1000.0 / (injected_dose_bq * decay_factor);
    std::vector<float> data(v.data());
    for (float& x : data) x = static_cast<float>(static_cast<double>(x) * factor);
    return Volume3D(v.dims(), v.spacing(), v.origin(), Modality::PET, std::move(data));
}

}  // namespace petgrid
