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

#ifndef PETGRID_RESAMPLE_HPP
#define PETGRID_RESAMPLE_HPP

#include "petgrid/volume.hpp"

namespace petgrid {

struct EmptyResult : Error {
    EmptyResult() : Error("all foreground voxels fall outside the target grid") {}
};

struct NonPositiveDose : Error {
    NonPositiveDose() : Error("injected dose must be > 0 Bq") {}
};

struct NonPositiveWeight : Error {
    NonPositiveWeight() : Error("patient weight must be > 0 kg") {}
};

struct NotPET : Error {
    NotPET() : Error("SUV scaling applies to PET volumes only") {}
};

/// Resamples a volume onto the canonical grid: `g.target_dims` voxels at
/// isotropic `g.target_spacing`, trilinear interpolation.
///
/// Grid alignment (also the contract for any independent reimplementation):
/// the physical center of the source grid coincides with the physical center
/// of the target grid, which is equivalent to interpolating at the native
/// scale and then symmetrically center-cropping / zero-padding to the target
/// dims. Target voxel u samples the source at continuous index
///   x[a] = (target_origin[a] + u[a] * spacing - source_origin[a]) / source_spacing[a]
/// with out-of-range corner samples contributing zero.
Volume3D resample(const Volume3D& v, const GridSpec& g);

/// Mask counterpart of resample: nearest-neighbor lookup (ties round away
/// from zero) so the output stays binary, same center alignment and
/// crop/pad behavior. Throws EmptyResult when a nonempty input lands
/// entirely outside the target grid. `source_spacing` / `source_origin`
/// describe the grid the mask currently lives on.
LesionMask resample_mask(const LesionMask& m, const Vec3& source_spacing,
                         const Vec3& source_origin, const GridSpec& g);

/// Body-weight SUV rescale of a PET activity-concentration volume (Bq/ml):
///   SUV = activity * weight_g / (injected_dose_bq * decay_factor).
Volume3D suv_scale(const Volume3D& v, double injected_dose_bq, double weight_kg,
                   double decay_factor);

/// Nearest target-grid depth index for a source-grid depth index under the
/// center alignment resample() uses. Report slice numbers refer to the
/// original grid; this carries them through the resampling transform.
std::int64_t map_depth_to_target(const Index3& src_dims, const Vec3& src_spacing,
                                 std::int64_t depth, const GridSpec& g);

}  // namespace petgrid

#endif  // PETGRID_RESAMPLE_HPP
