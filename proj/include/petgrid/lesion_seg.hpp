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

#ifndef PETGRID_LESION_SEG_HPP
#define PETGRID_LESION_SEG_HPP

#include <vector>

#include "petgrid/report_parser.hpp"
#include "petgrid/volume.hpp"

namespace petgrid {

struct NoMatch : Error {
    NoMatch() : Error("no component matches the reported SUVmax and slice") {}
};

struct EmptyInitialThreshold : Error {
    EmptyInitialThreshold()
        : Error("initial threshold produced an empty candidate set") {}
};

struct SegParams {
    double initial_fraction = 0.5;   // of the reported SUVmax
    double suv_tolerance = 0.1;      // |component max - reported| bound
    int connectivity = 26;           // 6, 18 or 26
    double refine_step = 0.05;       // threshold increment, fraction of peak
    double stabilize_eps = 0.01;     // relative voxel-count change to stop
    int max_iters = 50;
    double background_margin = 0.5;  // SUV above local background estimate

    void validate() const;
};

struct SegResult {
    LesionMask mask;
    double achieved_suv_max = 0.0;
    int iterations_used = 0;
    double final_threshold = 0.0;
    std::int64_t selected_component_seed_slice = 0;  // 0-based depth of peak voxel
    bool converged = true;
};

/// Voxels with value >= t. May be empty.
LesionMask threshold(const Volume3D& v, double t);

/// Maximal connected foreground sets under 6/18/26-connectivity, ordered by
/// size descending, then by smallest linear voxel index.
std::vector<LesionMask> connected_components(const LesionMask& m, int connectivity);

/// The component whose max SUV lies within params.suv_tolerance of
/// reported_suv and which intersects the reported axial slice (0-based
/// depth). Multiple matches: smallest |peak depth - slice|, then larger
/// component. Throws NoMatch.
const LesionMask& select_component(const std::vector<LesionMask>& components,
                                   const Volume3D& pet, double reported_suv,
                                   std::int64_t slice, const SegParams& params);

/// Adaptive threshold refinement of one component. The threshold walks from
/// the component's current support toward
///   max(initial_fraction * peak, local_background + background_margin)
/// in refine_step * peak increments, re-thresholding inside the component's
/// bounding box (dilated by 2 voxels) and keeping the connected component
/// that contains the peak voxel. The local background is the median value in
/// the dilated box outside the current mask. Stops when the relative
/// voxel-count change drops below stabilize_eps; the peak voxel is never
/// removed. Hitting max_iters returns the best mask so far with
/// converged = false.
SegResult refine(const LesionMask& component, const Volume3D& pet,
                 const SegParams& params);

/// End-to-end recovery of a lesion mask from (PET, reported SUVmax, reported
/// slice): threshold at initial_fraction * reported -> connected components
/// -> select -> refine. `reported_slice` is 0-based (callers convert report
/// numbering exactly once via LesionRecord::slice_index()).
SegResult segment_lesion(const Volume3D& pet, double reported_suv,
                         std::int64_t reported_slice, const SegParams& params);

/// Convenience overload taking a parsed record (must not be a prior
/// reference).
SegResult segment_lesion(const Volume3D& pet, const LesionRecord& record,
                         const SegParams& params);

}  // namespace petgrid

#endif  // PETGRID_LESION_SEG_HPP
