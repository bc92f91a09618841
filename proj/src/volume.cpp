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

#include "petgrid/volume.hpp"

#include <bit>
#include <cmath>
#include <limits>

namespace petgrid {

namespace {

void check_geometry(const Index3& dims, const Vec3& spacing) {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] <= 0) {
            throw Error("volume dims must be positive, got " + index3_to_string(dims));
        }
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
            throw Error("voxel spacing must be strictly positive and finite");
        }
    }
}

}  // namespace

Volume3D::Volume3D(Index3 dims, Vec3 spacing, Vec3 origin, Modality modality,
                   std::vector<float> data)
    : dims_(dims), spacing_(spacing), origin_(origin), modality_(modality),
      data_(std::move(data)) {
    check_geometry(dims_, spacing_);
    if (static_cast<std::int64_t>(data_.size()) != volume_of(dims_)) {
        throw Error("data length " + std::to_string(data_.size()) +
                    " does not match dims " + index3_to_string(dims_));
    }
}

Volume3D::Volume3D(Index3 dims, Vec3 spacing, Vec3 origin, Modality modality)
    : Volume3D(dims, spacing, origin, modality,
               std::vector<float>(static_cast<std::size_t>(volume_of(dims)), 0.0f)) {}

double Volume3D::min_value() const {
    double m = std::numeric_limits<double>::infinity();
    for (float v : data_) m = std::min(m, static_cast<double>(v));
    return m;
}

double Volume3D::max_value() const {
    double m = -std::numeric_limits<double>::infinity();
    for (float v : data_) m = std::max(m, static_cast<double>(v));
    return m;
}

void Volume3D::ensure_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) throw NonFiniteData();
    }
}

LesionMask::LesionMask(Index3 dims) : dims_(dims) {
    for (int a = 0; a < 3; ++a) {
        if (dims_[a] <= 0) {
            throw Error("mask dims must be positive, got " + index3_to_string(dims_));
        }
    }
    bits_.assign(static_cast<std::size_t>((volume_of(dims_) + 63) / 64), 0);
}

void LesionMask::set(std::int64_t i, bool value) {
    const std::size_t word = static_cast<std::size_t>(i >> 6);
    const std::uint64_t bit = 1ull << (i & 63);
    const bool present = bits_[word] & bit;
    if (value && !present) {
        bits_[word] |= bit;
        ++count_;
    } else if (!value && present) {
        bits_[word] &= ~bit;
        --count_;
    }
}

std::vector<std::int64_t> LesionMask::foreground() const {
    std::vector<std::int64_t> out;
    out.reserve(static_cast<std::size_t>(count_));
    const std::int64_t n = size();
    for (std::size_t w = 0; w < bits_.size(); ++w) {
        std::uint64_t word = bits_[w];
        while (word) {
            const int b = std::countr_zero(word);
            const std::int64_t idx = static_cast<std::int64_t>(w) * 64 + b;
            if (idx < n) out.push_back(idx);
            word &= word - 1;
        }
    }
    return out;
}

std::pair<Index3, Index3> LesionMask::bounding_box() const {
    if (empty()) throw EmptyMask();
    Index3 lo = {dims_[0], dims_[1], dims_[2]};
    Index3 hi = {-1, -1, -1};
    for (std::int64_t idx : foreground()) {
        const Index3 v = unravel(idx);
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], v[a]);
            hi[a] = std::max(hi[a], v[a]);
        }
    }
    return {lo, hi};
}

double dice(const LesionMask& a, const LesionMask& b) {
    if (a.dims() != b.dims()) throw Error("dice: mask dims differ");
    std::int64_t inter = 0;
    const auto& wa = a.raw_bits();
    const auto& wb = b.raw_bits();
    for (std::size_t i = 0; i < wa.size(); ++i) {
        inter += std::popcount(wa[i] & wb[i]);
    }
    const std::int64_t total = a.voxel_count() + b.voxel_count();
    if (total == 0) return 1.0;  // two empty masks overlap trivially
    return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

}  // namespace petgrid
