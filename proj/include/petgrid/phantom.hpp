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

#ifndef PETGRID_PHANTOM_HPP
#define PETGRID_PHANTOM_HPP

#include <string>
#include <vector>

#include "petgrid/volume.hpp"

namespace petgrid {

struct PhantomBlob {
    Vec3 center;        // voxel coordinates, placed on-grid by the generators
    double sigma = 3.0; // voxels
    double peak = 8.0;  // SUV at the blob center (background included)
};

/// Synthetic PET exam description: isotropic Gaussian blobs on a uniform
/// background, with optional seeded uniform noise.
struct Phantom {
    Index3 dims{96, 96, 176};
    Vec3 spacing{3.0, 3.0, 3.0};
    double background = 0.0;
    double noise_amplitude = 0.0;
    std::vector<PhantomBlob> blobs;

    void validate() const;
};

struct PhantomOutput {
    Volume3D pet;
    std::vector<LesionMask> ground_truth;  // one 50%-of-peak isocontour per blob
    std::string report_text;               // one parseable sentence per blob
};

/// Renders the phantom. Each blob contributes
/// (peak - background) * exp(-r^2 / (2 sigma^2)), truncated at 5 sigma;
/// the ground-truth mask is the analytic r <= sigma * sqrt(2 ln 2) sphere.
/// Noise draws come from UniformRng(seed) in raster order; identical seeds
/// give identical bytes.
PhantomOutput make_phantom(const Phantom& p, std::uint64_t seed);

/// Synthetic CT companion: same blob geometry at soft-tissue-like intensity
/// (40 HU peak, zero background), useful as the anatomical channel in demos.
Volume3D make_phantom_ct(const Phantom& p);

/// Randomized phantom for stress tests: `blob_count` blobs with peaks in
/// [3, 15] SUV (one decimal), sigma in [2, 4], pairwise well-separated and
/// clear of the volume edges. With background enabled (uniform in [1, 2])
/// peaks are raised so that half the reported SUVmax clears the background
/// by more than the segmentation margin, which is the thresholding
/// algorithm's domain of validity.
Phantom random_phantom(std::uint64_t seed, const Index3& dims, int blob_count,
                       bool with_background);

/// Writes a synthetic exam directory (pet.nii.gz, ct.nii.gz, report.txt and
/// gt_mask_<i>.nii.gz) in the layout run_pipeline consumes.
void write_phantom_exam(const Phantom& p, std::uint64_t seed,
                        const std::string& dir);

}  // namespace petgrid

#endif  // PETGRID_PHANTOM_HPP
