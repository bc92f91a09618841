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

#ifndef PETGRID_VOLUME_HPP
#define PETGRID_VOLUME_HPP

#include <cstdint>
#include <vector>

#include "petgrid/common.hpp"

namespace petgrid {

enum class Modality { PET, CT };

/// Dense 3D scalar grid with physical spacing and origin.
///
/// Values are stored as 32-bit floats; reductions accumulate in 64-bit.
/// Storage is row-major over (D, W, H) with the height axis fastest.
/// `origin` is the physical position (mm) of the center of voxel (0,0,0).
class Volume3D {
public:
    Volume3D(Index3 dims, Vec3 spacing, Vec3 origin, Modality modality,
             std::vector<float> data);

    /// Convenience: zero-filled volume.
    Volume3D(Index3 dims, Vec3 spacing, Vec3 origin, Modality modality);

    const Index3& dims() const { return dims_; }
    const Vec3& spacing() const { return spacing_; }
    const Vec3& origin() const { return origin_; }
    Modality modality() const { return modality_; }
    void set_modality(Modality m) { modality_ = m; }

    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    std::int64_t index(std::int64_t d, std::int64_t w, std::int64_t h) const {
        return (d * dims_[1] + w) * dims_[2] + h;
    }

    float at(std::int64_t d, std::int64_t w, std::int64_t h) const {
        return data_[index(d, w, h)];
    }
    float& at(std::int64_t d, std::int64_t w, std::int64_t h) {
        return data_[index(d, w, h)];
    }

    float operator[](std::int64_t i) const { return data_[i]; }
    float& operator[](std::int64_t i) { return data_[i]; }

    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

    Index3 unravel(std::int64_t i) const {
        const std::int64_t h = i % dims_[2];
        const std::int64_t w = (i / dims_[2]) % dims_[1];
        const std::int64_t d = i / (dims_[1] * dims_[2]);
        return {d, w, h};
    }

    double min_value() const;
    double max_value() const;

    /// Throws NonFiniteData if any voxel is NaN or infinite.
    void ensure_finite() const;

private:
    Index3 dims_;
    Vec3 spacing_;
    Vec3 origin_;
    Modality modality_;
    std::vector<float> data_;
};

/// Binary grid aligned to a companion Volume3D. Bit-packed with a cached
/// population count.
class LesionMask {
public:
    explicit LesionMask(Index3 dims);

    const Index3& dims() const { return dims_; }
    std::int64_t size() const { return volume_of(dims_); }
    std::int64_t voxel_count() const { return count_; }
    bool empty() const { return count_ == 0; }

    std::int64_t index(std::int64_t d, std::int64_t w, std::int64_t h) const {
        return (d * dims_[1] + w) * dims_[2] + h;
    }

    bool test(std::int64_t i) const {
        return (bits_[static_cast<std::size_t>(i >> 6)] >> (i & 63)) & 1u;
    }
    bool test(std::int64_t d, std::int64_t w, std::int64_t h) const {
        return test(index(d, w, h));
    }

    void set(std::int64_t i, bool value = true);
    void set(std::int64_t d, std::int64_t w, std::int64_t h, bool value = true) {
        set(index(d, w, h), value);
    }

    Index3 unravel(std::int64_t i) const {
        const std::int64_t h = i % dims_[2];
        const std::int64_t w = (i / dims_[2]) % dims_[1];
        const std::int64_t d = i / (dims_[1] * dims_[2]);
        return {d, w, h};
    }

    /// Linear indices of all set voxels, ascending.
    std::vector<std::int64_t> foreground() const;

    /// Inclusive bounding box of the foreground as (lo, hi) per axis.
    /// Throws EmptyMask on an empty mask.
    std::pair<Index3, Index3> bounding_box() const;

    bool operator==(const LesionMask& other) const {
        return dims_ == other.dims_ && bits_ == other.bits_;
    }

    const std::vector<std::uint64_t>& raw_bits() const { return bits_; }

private:
    Index3 dims_;
    std::vector<std::uint64_t> bits_;
    std::int64_t count_ = 0;
};

struct EmptyMask : Error {
    EmptyMask() : Error("operation requires a nonempty mask") {}
};

struct NonFiniteData : Error {
    NonFiniteData() : Error("volume contains NaN or infinite values") {}
};

/// Canonical working grid. Defaults: 3 mm isotropic, 192 x 192 x 352 voxels.
struct GridSpec {
    double target_spacing = 3.0;
    Index3 target_dims = {192, 192, 352};
};

/// Dice overlap between two masks of identical dims: 2|A n B| / (|A|+|B|).
double dice(const LesionMask& a, const LesionMask& b);

}  // namespace petgrid

#endif  // PETGRID_VOLUME_HPP
