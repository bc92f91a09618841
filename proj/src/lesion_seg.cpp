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

#include "petgrid/lesion_seg.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>

namespace petgrid {

void SegParams::validate() const {
    if (!(initial_fraction > 0.0 && initial_fraction < 1.0)) {
        throw Error("initial_fraction must lie in (0, 1)");
    }
    if (!(suv_tolerance > 0.0)) throw Error("suv_tolerance must be > 0");
    if (connectivity != 6 && connectivity != 18 && connectivity != 26) {
        throw Error("connectivity must be 6, 18 or 26");
    }
    if (max_iters < 1) throw Error("max_iters must be >= 1");
    if (!(refine_step > 0.0)) throw Error("refine_step must be > 0");
    if (!(stabilize_eps >= 0.0)) throw Error("stabilize_eps must be >= 0");
}

LesionMask threshold(const Volume3D& v, double t) {
    if (!std::isfinite(t)) throw Error("threshold must be finite");
    LesionMask m(v.dims());
    const std::int64_t n = v.size();
    for (std::int64_t i = 0; i < n; ++i) {
        if (static_cast<double>(v[i]) >= t) m.set(i);
    }
    return m;
}

namespace {

std::vector<Index3> neighbor_offsets(int connectivity) {
    std::vector<Index3> out;
    for (std::int64_t dd = -1; dd <= 1; ++dd) {
        for (std::int64_t dw = -1; dw <= 1; ++dw) {
            for (std::int64_t dh = -1; dh <= 1; ++dh) {
                const int nonzero = (dd != 0) + (dw != 0) + (dh != 0);
                if (nonzero == 0) continue;
                if (connectivity == 6 && nonzero > 1) continue;
                if (connectivity == 18 && nonzero > 2) continue;
                out.push_back({dd, dw, dh});
            }
        }
    }
    return out;
}

struct ComponentStats {
    std::int64_t size = 0;
    std::int64_t min_index = 0;   // smallest linear voxel index
    double max_value = 0.0;       // peak PET value (filled by callers that have data)
    std::int64_t argmax = 0;      // first raster voxel attaining max_value
    std::int64_t min_depth = 0;   // components span a contiguous depth interval
    std::int64_t max_depth = 0;
};

struct Labeling {
    std::vector<std::int32_t> labels;  // -1 = background
    std::vector<ComponentStats> stats; // ordered by (size desc, min_index asc)
};

// BFS labeling in raster order; component ids are then renumbered by
// (size descending, smallest voxel index) so downstream ordering is
// deterministic.
Labeling label_components(const LesionMask& m, int connectivity,
                          const Volume3D* values) {
    const Index3 dims = m.dims();
    const std::int64_t n = m.size();
    Labeling out;
    out.labels.assign(static_cast<std::size_t>(n), -1);
    const std::vector<Index3> offsets = neighbor_offsets(connectivity);

    std::vector<std::int64_t> queue;
    std::int32_t next_label = 0;
    for (std::int64_t seed : m.foreground()) {
        if (out.labels[static_cast<std::size_t>(seed)] != -1) continue;
        const std::int32_t label = next_label++;
        ComponentStats st;
        st.min_index = seed;
        st.min_depth = dims[0];
        st.max_depth = -1;
        st.max_value = -std::numeric_limits<double>::infinity();

        queue.clear();
        queue.push_back(seed);
        out.labels[static_cast<std::size_t>(seed)] = label;
        for (std::size_t qi = 0; qi < queue.size(); ++qi) {
            const std::int64_t cur = queue[qi];
            const Index3 c = m.unravel(cur);
            ++st.size;
            st.min_depth = std::min(st.min_depth, c[0]);
            st.max_depth = std::max(st.max_depth, c[0]);
            if (values) {
                const double v = static_cast<double>((*values)[cur]);
                if (v > st.max_value || (v == st.max_value && cur < st.argmax)) {
                    st.max_value = v;
                    st.argmax = cur;
                }
            }
            for (const Index3& off : offsets) {
                const std::int64_t d = c[0] + off[0];
                const std::int64_t w = c[1] + off[1];
                const std::int64_t h = c[2] + off[2];
                if (d < 0 || w < 0 || h < 0 || d >= dims[0] || w >= dims[1] ||
                    h >= dims[2]) {
                    continue;
                }
                const std::int64_t ni = m.index(d, w, h);
                if (!m.test(ni) || out.labels[static_cast<std::size_t>(ni)] != -1) {
                    continue;
                }
                out.labels[static_cast<std::size_t>(ni)] = label;
                queue.push_back(ni);
            }
        }
        out.stats.push_back(st);
    }

    // Renumber by (size desc, min_index asc).
    std::vector<std::int32_t> order(out.stats.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int32_t>(i);
    std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        if (out.stats[a].size != out.stats[b].size) {
            return out.stats[a].size > out.stats[b].size;
        }
        return out.stats[a].min_index < out.stats[b].min_index;
    });
    std::vector<std::int32_t> remap(out.stats.size());
    std::vector<ComponentStats> sorted_stats(out.stats.size());
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        remap[static_cast<std::size_t>(order[rank])] = static_cast<std::int32_t>(rank);
        sorted_stats[rank] = out.stats[static_cast<std::size_t>(order[rank])];
    }
    for (auto& l : out.labels) {
        if (l != -1) l = remap[static_cast<std::size_t>(l)];
    }
    out.stats = std::move(sorted_stats);
    return out;
}

LesionMask materialize(const Labeling& lab, const Index3& dims, std::int32_t id) {
    LesionMask m(dims);
    for (std::size_t i = 0; i < lab.labels.size(); ++i) {
        if (lab.labels[i] == id) m.set(static_cast<std::int64_t>(i));
    }
    return m;
}

}  // namespace

std::vector<LesionMask> connected_components(const LesionMask& m, int connectivity) {
    if (connectivity != 6 && connectivity != 18 && connectivity != 26) {
        throw Error("connectivity must be 6, 18 or 26");
    }
    const Labeling lab = label_components(m, connectivity, nullptr);
    std::vector<LesionMask> out;
    out.reserve(lab.stats.size());
    for (std::size_t id = 0; id < lab.stats.size(); ++id) {
        out.push_back(materialize(lab, m.dims(), static_cast<std::int32_t>(id)));
    }
    return out;
}

namespace {

struct SelectionScore {
    double max_value;
    std::int64_t depth_distance;
    std::int64_t size;
    bool intersects;
};

SelectionScore score_component(const LesionMask& comp, const Volume3D& pet,
                               std::int64_t slice) {
    SelectionScore s{-std::numeric_limits<double>::infinity(), 0, comp.voxel_count(),
                     false};
    std::int64_t argmax = -1;
    for (std::int64_t idx : comp.foreground()) {
        const double v = static_cast<double>(pet[idx]);
        if (v > s.max_value) {
            s.max_value = v;
            argmax = idx;
        }
        if (!s.intersects && comp.unravel(idx)[0] == slice) s.intersects = true;
    }
    s.depth_distance = std::llabs(comp.unravel(argmax)[0] - slice);
    return s;
}

}  // namespace

const LesionMask& select_component(const std::vector<LesionMask>& components,
                                   const Volume3D& pet, double reported_suv,
                                   std::int64_t slice, const SegParams& params) {
    const LesionMask* best = nullptr;
    SelectionScore best_score{};
    for (const LesionMask& comp : components) {
        if (comp.empty() || comp.dims() != pet.dims()) continue;
        const SelectionScore s = score_component(comp, pet, slice);
        if (!s.intersects) continue;
        if (std::abs(s.max_value - reported_suv) > params.suv_tolerance) continue;
        if (!best || s.depth_distance < best_score.depth_distance ||
            (s.depth_distance == best_score.depth_distance &&
             s.size > best_score.size)) {
            best = &comp;
            best_score = s;
        }
    }
    if (!best) throw NoMatch();
    return *best;
}

namespace {

double median_of(std::vector<float>& values) {
    const std::size_t n = values.size();
    const std::size_t mid = n / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    double m = values[mid];
    if (n % 2 == 0) {
        const auto lower = std::max_element(values.begin(), values.begin() + mid);
        m = (m + static_cast<double>(*lower)) / 2.0;
    }
    return m;
}

struct Box {
    Index3 lo;
    Index3 hi;  // inclusive
};

// Connected component of {x in box : pet[x] >= t} containing `peak`.
// Thresholds are clamped to the peak value beforehand, so the peak always
// qualifies.
LesionMask box_component_of_peak(const Volume3D& pet, const Box& box, double t,
                                 std::int64_t peak,
                                 const std::vector<Index3>& offsets) {
    LesionMask m(pet.dims());
    std::vector<std::int64_t> queue;
    queue.push_back(peak);
    m.set(peak);
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
        const Index3 c = pet.unravel(queue[qi]);
        for (const Index3& off : offsets) {
            const std::int64_t d = c[0] + off[0];
            const std::int64_t w = c[1] + off[1];
            const std::int64_t h = c[2] + off[2];
            if (d < box.lo[0] || w < box.lo[1] || h < box.lo[2] || d > box.hi[0] ||
                w > box.hi[1] || h > box.hi[2]) {
                continue;
            }
            const std::int64_t ni = pet.index(d, w, h);
            if (m.test(ni) || static_cast<double>(pet[ni]) < t) continue;
            m.set(ni);
            queue.push_back(ni);
        }
    }
    return m;
}

std::optional<double> shell_background(const Volume3D& pet, const Box& box,
                                       const LesionMask& mask) {
    std::vector<float> shell;
    for (std::int64_t d = box.lo[0]; d <= box.hi[0]; ++d) {
        for (std::int64_t w = box.lo[1]; w <= box.hi[1]; ++w) {
            for (std::int64_t h = box.lo[2]; h <= box.hi[2]; ++h) {
                const std::int64_t i = pet.index(d, w, h);
                if (!mask.test(i)) shell.push_back(pet[i]);
            }
        }
    }
    if (shell.empty()) return std::nullopt;
    return median_of(shell);
}

bool intersects_depth(const LesionMask& m, std::int64_t slice) {
    if (slice < 0 || slice >= m.dims()[0]) return false;
    const Index3& dims = m.dims();
    const std::int64_t base = slice * dims[1] * dims[2];
    for (std::int64_t i = 0; i < dims[1] * dims[2]; ++i) {
        if (m.test(base + i)) return true;
    }
    return false;
}

// protected_slice >= 0 keeps the result intersecting that depth: iterates
// shrink monotonically, so the last iterate that still touched the slice is
// returned if the final one does not.
SegResult refine_impl(const LesionMask& component, const Volume3D& pet,
                      const SegParams& params, std::int64_t protected_slice) {
    params.validate();
    if (component.empty()) throw EmptyMask();
    if (component.dims() != pet.dims()) throw Error("refine: mask/volume dims differ");

    const std::vector<Index3> offsets = neighbor_offsets(params.connectivity);
    const std::vector<std::int64_t> fg = component.foreground();

    std::int64_t peak = fg.front();
    double peak_value = pet[peak];
    double support_min = pet[peak];
    for (std::int64_t idx : fg) {
        const double v = pet[idx];
        if (v > peak_value) {
            peak_value = v;
            peak = idx;
        }
        support_min = std::min(support_min, v);
    }

    const auto [blo, bhi] = component.bounding_box();
    Box box;
    for (int a = 0; a < 3; ++a) {
        box.lo[a] = std::max<std::int64_t>(0, blo[a] - 2);
        box.hi[a] = std::min<std::int64_t>(pet.dims()[a] - 1, bhi[a] + 2);
    }

    SegResult result{component, peak_value, 0, support_min,
                     pet.unravel(peak)[0], true};
    LesionMask current = component;
    std::optional<LesionMask> last_on_slice;
    if (protected_slice >= 0 && intersects_depth(current, protected_slice)) {
        last_on_slice = current;
    }

    double t_cur = support_min;
    bool stabilized = false;
    int k = 0;
    while (k < params.max_iters) {
        ++k;
        const std::optional<double> bg = shell_background(pet, box, current);
        double t_goal = params.initial_fraction * peak_value;
        if (bg) t_goal = std::max(t_goal, *bg + params.background_margin);
        t_goal = std::min(t_goal, peak_value);  // the peak is never removed
        const double t_new =
            (t_goal > t_cur) ? std::min(t_cur + params.refine_step * peak_value, t_goal)
                             : t_cur;

        LesionMask next = box_component_of_peak(pet, box, t_new, peak, offsets);
        const double change =
            static_cast<double>(std::llabs(next.voxel_count() - current.voxel_count())) /
            static_cast<double>(std::max<std::int64_t>(1, current.voxel_count()));
        current = std::move(next);
        t_cur = t_new;
        if (protected_slice >= 0 && intersects_depth(current, protected_slice)) {
            last_on_slice = current;
        }
        if (change < params.stabilize_eps) {
            stabilized = true;
            break;
        }
    }

    result.iterations_used = k;
    result.final_threshold = t_cur;
    result.converged = stabilized;
    if (protected_slice >= 0 && !intersects_depth(current, protected_slice) &&
        last_on_slice) {
        result.mask = std::move(*last_on_slice);
    } else {
        result.mask = std::move(current);
    }
    result.achieved_suv_max = peak_value;
    return result;
}

}  // namespace

SegResult refine(const LesionMask& component, const Volume3D& pet,
                 const SegParams& params) {
    return refine_impl(component, pet, params, -1);
}

SegResult segment_lesion(const Volume3D& pet, double reported_suv,
                         std::int64_t reported_slice, const SegParams& params) {
    params.validate();
    if (!(reported_suv > 0.0)) throw Error("reported SUVmax must be > 0");
    if (reported_slice < 0 || reported_slice >= pet.dims()[0]) throw NoMatch();

    const double t0 = params.initial_fraction * reported_suv;
    const LesionMask initial = threshold(pet, t0);
    if (initial.empty()) throw EmptyInitialThreshold();

    // Label once and only materialize the selected component; building every
    // component as a full mask would be wasteful on canonical-size grids.
    const Labeling lab = label_components(initial, params.connectivity, &pet);

    std::int32_t best = -1;
    std::int64_t best_dist = 0;
    for (std::size_t id = 0; id < lab.stats.size(); ++id) {
        const ComponentStats& st = lab.stats[id];
        if (reported_slice < st.min_depth || reported_slice > st.max_depth) continue;
        if (std::abs(st.max_value - reported_suv) > params.suv_tolerance) continue;
        const std::int64_t dist = std::llabs(pet.unravel(st.argmax)[0] - reported_slice);
        if (best == -1 || dist < best_dist ||
            (dist == best_dist && st.size > lab.stats[best].size)) {
            best = static_cast<std::int32_t>(id);
            best_dist = dist;
        }
    }
    if (best == -1) throw NoMatch();

    const LesionMask component = materialize(lab, pet.dims(), best);
    return refine_impl(component, pet, params, reported_slice);
}

SegResult segment_lesion(const Volume3D& pet, const LesionRecord& record,
                         const SegParams& params) {
    if (record.is_prior_reference) {
        throw Error("prior-reference records are excluded from segmentation");
    }
    return segment_lesion(pet, record.suv_max, record.slice_index(), params);
}

}  // namespace petgrid
