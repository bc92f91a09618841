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

#ifndef PETGRID_NIFTI_HPP
#define PETGRID_NIFTI_HPP

#include <string>

#include "petgrid/volume.hpp"

namespace petgrid {

struct MalformedHeader : Error {
    explicit MalformedHeader(const std::string& why)
        : Error("malformed NIfTI header: " + why) {}
};

struct UnsupportedDimensionality : Error {
    explicit UnsupportedDimensionality(int ndim)
        : Error("NIfTI dataset is " + std::to_string(ndim) + "D, expected 3D") {}
};

/// Reads a NIfTI-1 single-file dataset (.nii or .nii.gz, gzip detected
/// transparently). The file axes map onto volume axes as
/// depth = file k (slowest), width = file j, height = file i (fastest),
/// so the axial slice index is the file's z index and the in-memory layout
/// needs no reshuffle. Rotational parts of the qform/sform are ignored;
/// inputs are assumed axis-aligned.
///
/// Integer and floating payloads are converted to 32-bit float storage with
/// scl_slope / scl_inter rescaling applied (slope 0 treated as 1).
Volume3D load_nifti(const std::string& path, Modality modality = Modality::PET);

/// Writes a volume as NIfTI-1 float32. Compresses when the path ends in .gz.
void save_nifti(const Volume3D& v, const std::string& path);

/// Writes a mask as NIfTI-1 uint8 (0/1 voxels) on the grid described by
/// `spacing` and `origin`.
void save_nifti_mask(const LesionMask& m, const Vec3& spacing, const Vec3& origin,
                     const std::string& path);

/// Reads a mask written by save_nifti_mask; any nonzero voxel is foreground.
LesionMask load_nifti_mask(const std::string& path);

}  // namespace petgrid

#endif  // PETGRID_NIFTI_HPP
