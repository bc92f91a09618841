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

#include <cmath>

#include "doctest.h"
#include "petgrid/lesion_seg.hpp"
#include "petgrid/phantom.hpp"
#include "test_helpers.hpp"

using namespace petgrid;
using petgrid::testing::make_volume;

namespace {

LesionMask cube_mask(const Index3& dims, const Index3& lo, std::int64_t side) {
    LesionMask m(dims);
    for (std::int64_t d = 0; d < side; ++d) {
        for (std::int64_t w = 0; w < side; ++w) {
            for (std::int64_t h = 0; h < side; ++h) {
                m.set(lo[0] + d, lo[1] + w, lo[2] + h);
            }
        }
    }
    return m;
}

}  // namespace

TEST_CASE("threshold basics and analytic ramp") {
    const Volume3D five = make_volume({3, 3, 3}, 5.0f);
    CHECK(threshold(five, 4.0).voxel_count() == 27);
    CHECK(threshold(five, 6.0).voxel_count() == 0);

    // Linear ramp 0..10 along the depth axis: exactly the upper half >= 5.
    Volume3D ramp = make_volume({11, 4, 4});
    for (std::int64_t d = 0; d < 11; ++d) {
        for (std::int64_t w = 0; w < 4; ++w) {
            for (std::int64_t h = 0; h < 4; ++h) {
                ramp.at(d, w, h) = static_cast<float>(d);
            }
        }
    }
    const LesionMask upper = threshold(ramp, 5.0);
    CHECK(upper.voxel_count() == 6 * 16);
    for (std::int64_t idx : upper.foreground()) {
        CHECK(upper.unravel(idx)[0] >= 5);
    }
}

TEST_CASE("threshold is monotone in t") {
    Volume3D v = make_volume({6, 6, 6});
    UniformRng rng(3);
    for (std::int64_t i = 0; i < v.size(); ++i) {
        v[i] = static_cast<float>(rng.next_double(0.0, 10.0));
    }
    const LesionMask loose = threshold(v, 3.0);
    const LesionMask tight = threshold(v, 7.0);
    for (std::int64_t idx : tight.foreground()) CHECK(loose.test(idx));
}

TEST_CASE("connected_components separates disjoint cubes") {
    LesionMask m({12, 12, 12});
    for (std::int64_t idx : cube_mask({12, 12, 12}, {1, 1, 1}, 3).foreground()) m.set(idx);
    for (std::int64_t idx : cube_mask({12, 12, 12}, {7, 7, 7}, 3).foreground()) m.set(idx);

    const auto comps = connected_components(m, 26);
    REQUIRE(comps.size() == 2);
    CHECK(comps[0].voxel_count() == 27);
    CHECK(comps[1].voxel_count() == 27);

    // Partition: pairwise disjoint, union equals the input.
    LesionMask u({12, 12, 12});
    for (const auto& c : comps) {
        for (std::int64_t idx : c.foreground()) {
            CHECK_FALSE(u.test(idx));
            u.set(idx);
        }
    }
    CHECK(u == m);
}

TEST_CASE("corner-touching cubes merge under 26 but not 6 connectivity") {
    LesionMask m({10, 10, 10});
    for (std::int64_t idx : cube_mask({10, 10, 10}, {1, 1, 1}, 2).foreground()) m.set(idx);
    for (std::int64_t idx : cube_mask({10, 10, 10}, {3, 3, 3}, 2).foreground()) m.set(idx);
    CHECK(connected_components(m, 26).size() == 1);
    CHECK(connected_components(m, 6).size() == 2);
    CHECK(connected_components(m, 18).size() == 2);  // corner contact only
}

TEST_CASE("connected_components on an empty mask is empty") {
    CHECK(connected_components(LesionMask({4, 4, 4}), 26).empty());
}

TEST_CASE("components are ordered by size then smallest index") {
    LesionMask m({16, 16, 16});
    for (std::int64_t idx : cube_mask({16, 16, 16}, {10, 10, 10}, 4).foreground()) m.set(idx);
    for (std::int64_t idx : cube_mask({16, 16, 16}, {1, 1, 1}, 2).foreground()) m.set(idx);
    const auto comps = connected_components(m, 26);
    REQUIRE(comps.size() == 2);
    CHECK(comps[0].voxel_count() == 64);
    CHECK(comps[1].voxel_count() == 8);
}

TEST_CASE("select_component honors tolerance, slice and tie-breaks") {
    Phantom p;
    p.dims = {48, 32, 32};
    p.blobs = {{{12, 16, 16}, 2.5, 8.4}, {{36, 16, 16}, 2.5, 9.0}};
    const PhantomOutput out = make_phantom(p, 1);
    SegParams params;

    const LesionMask initial = threshold(out.pet, 0.5 * 8.4);
    const auto comps = connected_components(initial, params.connectivity);
    REQUIRE(comps.size() == 2);

    const LesionMask& chosen = select_component(comps, out.pet, 8.4, 12, params);
    CHECK(chosen.test(12, 16, 16));

    // Reported SUV matching neither blob within 0.1.
    CHECK_THROWS_AS(select_component(comps, out.pet, 8.7, 12, params), NoMatch);
    // Slice intersecting neither component.
    CHECK_THROWS_AS(select_component(comps, out.pet, 8.4, 24, params), NoMatch);
}

TEST_CASE("select_component breaks near-ties by depth then size") {
    // Two blobs within tolerance of the same report; both intersect slice 16
    // via their own depth ranges? Keep them on the same slice instead.
    Phantom p;
    p.dims = {32, 64, 32};
    p.blobs = {{{16, 16, 16}, 2.0, 8.4}, {{16, 48, 16}, 3.0, 8.45}};
    const PhantomOutput out = make_phantom(p, 1);
    SegParams params;

    const LesionMask initial = threshold(out.pet, 0.5 * 8.4);
    const auto comps = connected_components(initial, params.connectivity);
    REQUIRE(comps.size() == 2);

    // Both qualify at tol 0.1 and the same depth distance 0; the larger
    // (sigma 3) blob wins.
    const LesionMask& chosen = select_component(comps, out.pet, 8.43, 16, params);
    CHECK(chosen.test(16, 48, 16));
}

TEST_CASE("refine recovers the half-max contour of an isolated blob") {
    Phantom p;
    p.dims = {48, 48, 48};
    p.blobs = {{{24, 24, 24}, 3.0, 10.0}};
    const PhantomOutput out = make_phantom(p, 1);
    SegParams params;

    const LesionMask initial = threshold(out.pet, 5.0);
    const auto comps = connected_components(initial, params.connectivity);
    REQUIRE(comps.size() == 1);
    const SegResult r = refine(comps[0], out.pet, params);

    CHECK(r.converged);
    CHECK(r.achieved_suv_max == doctest::Approx(10.0).epsilon(1e-3));
    CHECK(dice(r.mask, out.ground_truth[0]) >= 0.9);
    CHECK(r.selected_component_seed_slice == 24);
}

TEST_CASE("refine pushes the threshold above a uniform background") {
    Phantom p;
    p.dims = {48, 48, 48};
    p.background = 2.0;
    p.blobs = {{{24, 24, 24}, 3.0, 10.0}};
    const PhantomOutput out = make_phantom(p, 1);
    SegParams params;

    const LesionMask initial = threshold(out.pet, 5.0);
    const auto comps = connected_components(initial, params.connectivity);
    const SegResult r = refine(comps[0], out.pet, params);

    CHECK(r.final_threshold > 2.5);  // background + margin
    for (std::int64_t idx : r.mask.foreground()) {
        CHECK(out.pet[idx] > 2.5);
    }
}

TEST_CASE("single-voxel lesion converges immediately to itself") {
    Volume3D v = make_volume({9, 9, 9}, 0.0f);
    v.at(4, 4, 4) = 12.0f;
    SegParams params;
    const LesionMask initial = threshold(v, 6.0);
    REQUIRE(initial.voxel_count() == 1);
    const SegResult r = refine(connected_components(initial, 26)[0], v, params);
    CHECK(r.iterations_used == 1);
    CHECK(r.converged);
    CHECK(r.mask.voxel_count() == 1);
    CHECK(r.mask.test(4, 4, 4));
}

TEST_CASE("segment_lesion end to end on a three-blob phantom") {
    Phantom p;
    p.dims = {96, 48, 48};
    p.blobs = {{{20, 24, 24}, 2.5, 4.0},
               {{48, 24, 24}, 3.0, 8.4},
               {{76, 24, 24}, 2.5, 12.0}};
    const PhantomOutput out = make_phantom(p, 1);
    SegParams params;

    const SegResult r = segment_lesion(out.pet, 8.4, 48, params);
    CHECK(std::abs(r.achieved_suv_max - 8.4) <= params.suv_tolerance);
    CHECK(r.mask.test(48, 24, 24));
    CHECK(dice(r.mask, out.ground_truth[1]) >= 0.9);

    // The refined mask stays inside the initial threshold support.
    const LesionMask initial = threshold(out.pet, 0.5 * 8.4);
    for (std::int64_t idx : r.mask.foreground()) CHECK(initial.test(idx));

    // Mask is a single connected component.
    CHECK(connected_components(r.mask, params.connectivity).size() == 1);

    SUBCASE("reported SUV above the volume maximum") {
        CHECK_THROWS_AS(segment_lesion(out.pet, 20.0, 48, params),
                        EmptyInitialThreshold);
    }
    SUBCASE("reported slice outside every blob") {
        CHECK_THROWS_AS(segment_lesion(out.pet, 8.4, 2, params), NoMatch);
    }
    SUBCASE("prior-reference records are refused") {
        LesionRecord rec;
        rec.suv_max = 8.4;
        rec.slice_number = 49;
        rec.is_prior_reference = true;
        CHECK_THROWS_AS(segment_lesion(out.pet, rec, params), Error);
    }
}

TEST_CASE("segment_lesion is deterministic bit for bit") {
    const Phantom p = random_phantom(42, {64, 64, 64}, 3, true);
    const PhantomOutput out = make_phantom(p, 42);
    SegParams params;
    const double suv = p.blobs[1].peak;
    const auto slice = static_cast<std::int64_t>(std::llround(p.blobs[1].center[0]));

    const SegResult a = segment_lesion(out.pet, suv, slice, params);
    const SegResult b = segment_lesion(out.pet, suv, slice, params);
    CHECK(a.mask == b.mask);
    CHECK(a.achieved_suv_max == b.achieved_suv_max);
    CHECK(a.iterations_used == b.iterations_used);
    CHECK(a.final_threshold == b.final_threshold);
}
