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

#include "petgrid/focal_prompt.hpp"

#include <algorithm>
#include <cmath>

namespace petgrid {

Vec3 mask_centroid(const LesionMask& m) {
    if (m.empty()) throw EmptyMask();
    double sum[3] = {0.0, 0.0, 0.0};
    for (std::int64_t idx : m.foreground()) {
        const Index3 c = m.unravel(idx);
        for (int a = 0; a < 3; ++a) sum[a] += static_cast<double>(c[a]);
    }
    const double n = static_cast<double>(m.voxel_count());
    return {sum[0] / n, sum[1] / n, sum[2] / n};
}

double base_side(const LesionMask& m, double margin_fraction, double min_side) {
    if (m.empty()) throw EmptyMask();
    if (margin_fraction < 0.0) throw Error("margin_fraction must be >= 0");
    const auto [lo, hi] = m.bounding_box();
    std::int64_t extent = 1;
    for (int a = 0; a < 3; ++a) extent = std::max(extent, hi[a] - lo[a] + 1);
    return std::max(min_side, (1.0 + margin_fraction) * static_cast<double>(extent));
}

std::pair<Vec3, double> perturb(const Vec3& center, double side,
                                const PerturbSpec& spec) {
    spec.validate();
    if (!(side > 0.0)) throw Error("cube side must be > 0");
    UniformRng rng(spec.rng_seed);
    const double bound = spec.fraction * side;
    Vec3 c;
    for (int a = 0; a < 3; ++a) {
        c[a] = center[a] + (2.0 * rng.next_double() - 1.0) * bound;
    }
    const double r = side + (2.0 * rng.next_double() - 1.0) * bound;
    return {c, r};
}

namespace {

// Per-axis box placement: grow was already resolved (side >= extent on every
// axis), so translation alone can contain the mask. Prefer positions fully
// inside the volume when the containment interval allows it.
std::int64_t place_axis(std::int64_t lo_guess, std::int64_t side,
                        std::int64_t mask_lo, std::int64_t mask_hi,
                        std::int64_t dim) {
    const std::int64_t contain_lo = mask_hi + 1 - side;
    const std::int64_t contain_hi = mask_lo;
    std::int64_t feasible_lo = contain_lo;
    std::int64_t feasible_hi = contain_hi;
    if (side <= dim) {
        const std::int64_t in_lo = std::max<std::int64_t>(contain_lo, 0);
        const std::int64_t in_hi = std::min<std::int64_t>(contain_hi, dim - side);
        if (in_lo <= in_hi) {
            feasible_lo = in_lo;
            feasible_hi = in_hi;
        }
    }
    return std::clamp(lo_guess, feasible_lo, feasible_hi);
}

float sample_nearest_mask(const LesionMask& m, double d, double w, double h) {
    const std::int64_t sd = std::llround(d);
    const std::int64_t sw = std::llround(w);
    const std::int64_t sh = std::llround(h);
    if (sd < 0 || sw < 0 || sh < 0 || sd >= m.dims()[0] || sw >= m.dims()[1] ||
        sh >= m.dims()[2]) {
        return 0.0f;
    }
    return m.test(sd, sw, sh) ? 1.0f : 0.0f;
}

double sample_or_zero(const Volume3D& v, std::int64_t d, std::int64_t w,
                      std::int64_t h) {
    if (d < 0 || w < 0 || h < 0 || d >= v.dims()[0] || w >= v.dims()[1] ||
        h >= v.dims()[2]) {
        return 0.0;
    }
    return static_cast<double>(v.at(d, w, h));
}

double trilinear(const Volume3D& v, double d, double w, double h) {
    const std::int64_t d0 = static_cast<std::int64_t>(std::floor(d));
    const std::int64_t w0 = static_cast<std::int64_t>(std::floor(w));
    const std::int64_t h0 = static_cast<std::int64_t>(std::floor(h));
    const double fd = d - static_cast<double>(d0);
    const double fw = w - static_cast<double>(w0);
    const double fh = h - static_cast<double>(h0);
    double acc = 0.0;
    for (int dd = 0; dd <= 1; ++dd) {
        for (int dw = 0; dw <= 1; ++dw) {
            for (int dh = 0; dh <= 1; ++dh) {
                const double weight = (dd ? fd : 1.0 - fd) * (dw ? fw : 1.0 - fw) *
                                      (dh ? fh : 1.0 - fh);
                if (weight == 0.0) continue;
                acc += weight * sample_or_zero(v, d0 + dd, w0 + dw, h0 + dh);
            }
        }
    }
    return acc;
}

}  // namespace

std::vector<float> crop_values(const Volume3D& v, const Index3& box_lo,
                               std::int64_t box_side) {
    std::vector<float> out(static_cast<std::size_t>(box_side * box_side * box_side));
    std::size_t o = 0;
    for (std::int64_t d = 0; d < box_side; ++d) {
        for (std::int64_t w = 0; w < box_side; ++w) {
            for (std::int64_t h = 0; h < box_side; ++h, ++o) {
                out[o] = static_cast<float>(
                    sample_or_zero(v, box_lo[0] + d, box_lo[1] + w, box_lo[2] + h));
            }
        }
    }
    return out;
}

std::pair<Index3, std::int64_t> focal_box(const LesionMask& m, const Vec3& center,
                                          double side, const Index3& volume_dims) {
    if (m.empty()) throw EmptyMask();
    if (!(side > 0.0)) throw Error("cube side must be > 0");
    const auto [mlo, mhi] = m.bounding_box();
    std::int64_t box_side = std::max<std::int64_t>(1, std::llround(side));
    for (int a = 0; a < 3; ++a) {
        box_side = std::max(box_side, mhi[a] - mlo[a] + 1);  // grow, stay cubic
    }
    Index3 box_lo;
    for (int a = 0; a < 3; ++a) {
        const std::int64_t guess = std::llround(center[a] - side / 2.0);
        box_lo[a] = place_axis(guess, box_side, mlo[a], mhi[a], volume_dims[a]);
    }
    return {box_lo, box_side};
}

FocalCrop crop(const Volume3D& pet, const Volume3D& ct, const LesionMask& m,
               const Vec3& center, double side, const Index3& resampled_dims) {
    if (m.empty()) throw EmptyMask();
    if (pet.dims() != ct.dims() || pet.dims() != m.dims()) {
        throw Error("crop: PET/CT/mask grids are not aligned");
    }
    for (int a = 0; a < 3; ++a) {
        if (resampled_dims[a] <= 0) throw Error("resampled_dims must be positive");
    }

    const auto [box_lo, box_side] = focal_box(m, center, side, pet.dims());

    // Resample the box to the focal resolution with a pure index-space map:
    // output u samples source at box_lo + (u + 0.5) * box_side / out - 0.5.
    const Index3& out_dims = resampled_dims;
    Vec3 scale, crop_spacing, crop_origin;
    for (int a = 0; a < 3; ++a) {
        scale[a] = static_cast<double>(box_side) / static_cast<double>(out_dims[a]);
        crop_spacing[a] = pet.spacing()[a] * scale[a];
        crop_origin[a] = pet.origin()[a] +
                         (static_cast<double>(box_lo[a]) + 0.5 * scale[a] - 0.5) *
                             pet.spacing()[a];
    }

    Volume3D pet_crop(out_dims, crop_spacing, crop_origin, pet.modality());
    Volume3D ct_crop(out_dims, crop_spacing, crop_origin, ct.modality());
    LesionMask mask_crop(out_dims);

    std::int64_t o = 0;
    for (std::int64_t d = 0; d < out_dims[0]; ++d) {
        const double sd = static_cast<double>(box_lo[0]) +
                          (static_cast<double>(d) + 0.5) * scale[0] - 0.5;
        for (std::int64_t w = 0; w < out_dims[1]; ++w) {
            const double sw = static_cast<double>(box_lo[1]) +
                              (static_cast<double>(w) + 0.5) * scale[1] - 0.5;
            for (std::int64_t h = 0; h < out_dims[2]; ++h, ++o) {
                const double sh = static_cast<double>(box_lo[2]) +
                                  (static_cast<double>(h) + 0.5) * scale[2] - 0.5;
                pet_crop[o] = static_cast<float>(trilinear(pet, sd, sw, sh));
                ct_crop[o] = static_cast<float>(trilinear(ct, sd, sw, sh));
                if (sample_nearest_mask(m, sd, sw, sh) != 0.0f) mask_crop.set(o);
            }
        }
    }

    FocalCrop result{center,   side,    box_lo,
                     box_side, std::move(pet_crop), std::move(ct_crop),
                     std::move(mask_crop), out_dims};
    return result;
}

FocalCrop make_focal_crop(const Volume3D& pet, const Volume3D& ct,
                          const LesionMask& m, const PerturbSpec& spec,
                          double margin_fraction, double min_side,
                          const Index3& resampled_dims) {
    const Vec3 c = mask_centroid(m);
    const double r = base_side(m, margin_fraction, min_side);
    const auto [c_tilde, r_tilde] = perturb(c, r, spec);
    return crop(pet, ct, m, c_tilde, r_tilde, resampled_dims);
}

}  // namespace petgrid
