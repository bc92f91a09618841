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

#ifndef PETGRID_FOCAL_PROMPT_HPP
#define PETGRID_FOCAL_PROMPT_HPP

#include <utility>

#include "petgrid/volume.hpp"

namespace petgrid {

/// Center/size perturbation applied to the focal crop box. Draws are uniform
/// on [-fraction*r, +fraction*r), produced by UniformRng (MT19937-64) in the
/// fixed order: center depth, center width, center height, side.
struct PerturbSpec {
    double fraction = 0.2;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (!(fraction >= 0.0 && fraction < 0.5)) {
            throw Error("perturbation fraction must lie in [0, 0.5)");
        }
    }
};

/// Cubic high-resolution crop around a lesion. pet_crop / ct_crop / mask_crop
/// are resampled to `resampled_dims`; `box_lo`/`box_side` describe the
/// realized integer box in source voxel coordinates, which always contains
/// every foreground voxel of the source mask.
struct FocalCrop {
    Vec3 center;             // perturbed center (continuous voxel coords)
    double side = 0.0;       // perturbed side length (voxels)
    Index3 box_lo{};         // realized box corner (may be out of bounds)
    std::int64_t box_side = 0;
    Volume3D pet_crop;
    Volume3D ct_crop;
    LesionMask mask_crop;
    Index3 resampled_dims{32, 32, 32};
};

/// Arithmetic mean of foreground voxel coordinates, (depth, width, height).
Vec3 mask_centroid(const LesionMask& m);

/// Pre-perturbation cube side: (1 + margin_fraction) times the largest
/// bounding-box extent, clamped below by min_side voxels.
double base_side(const LesionMask& m, double margin_fraction, double min_side = 16.0);

/// Perturbed (center, side); identity when spec.fraction == 0.
std::pair<Vec3, double> perturb(const Vec3& center, double side,
                                const PerturbSpec& spec);

/// Integer box (corner, cubic side) that crop() will realize for the given
/// perturbed center and side, without extracting any voxels.
std::pair<Index3, std::int64_t> focal_box(const LesionMask& m, const Vec3& center,
                                          double side, const Index3& volume_dims);

/// Extracts the focal crops for a cube of side `side` centered at `center`.
/// The box is first grown (all axes equally, keeping it cubic) if the mask
/// bounding box does not fit, then translated per axis to contain the mask,
/// preferring positions inside the volume; regions outside the volume are
/// zero-padded. PET/CT are resampled trilinearly to `resampled_dims`, the
/// mask with nearest-neighbor.
FocalCrop crop(const Volume3D& pet, const Volume3D& ct, const LesionMask& m,
               const Vec3& center, double side, const Index3& resampled_dims);

/// Full pipeline step: centroid -> base side -> perturb -> crop.
FocalCrop make_focal_crop(const Volume3D& pet, const Volume3D& ct,
                          const LesionMask& m, const PerturbSpec& spec,
                          double margin_fraction = 0.25, double min_side = 16.0,
                          const Index3& resampled_dims = {32, 32, 32});

/// Raw (unresampled) values of `v` inside the box, zero outside the volume.
/// Exposed so sub-array equality against the source can be checked directly.
std::vector<float> crop_values(const Volume3D& v, const Index3& box_lo,
                               std::int64_t box_side);

}  // namespace petgrid

#endif  // PETGRID_FOCAL_PROMPT_HPP
