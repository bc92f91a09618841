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

#include "petgrid/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "petgrid/nifti.hpp"

namespace petgrid {

void Phantom::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] <= 0) throw Error("phantom dims must be positive");
        if (!(spacing[a] > 0.0)) throw Error("phantom spacing must be positive");
    }
    if (background < 0.0) throw Error("phantom background must be >= 0");
    if (noise_amplitude < 0.0) throw Error("phantom noise amplitude must be >= 0");
    for (const PhantomBlob& b : blobs) {
        if (!(b.sigma > 0.0)) throw Error("blob sigma must be > 0");
        if (!(b.peak > background)) {
            throw Error("blob peak must exceed the background");
        }
        for (int a = 0; a < 3; ++a) {
            if (b.center[a] < 0.0 || b.center[a] > static_cast<double>(dims[a] - 1)) {
                throw Error("blob center lies outside the grid");
            }
        }
    }
}

namespace {

const char* kPhantomSites[] = {
    "right hilar node",   "liver",          "left upper lobe",
    "right iliac bone",   "spleen",         "left cervical node",
    "right adrenal gland", "mediastinum",
};

void add_blob(Volume3D& pet, const PhantomBlob& b, double amplitude) {
    const Index3& dims = pet.dims();
    const double reach = 5.0 * b.sigma;
    Index3 lo, hi;
    for (int a = 0; a < 3; ++a) {
        lo[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(
                                              std::floor(b.center[a] - reach)));
        hi[a] = std::min<std::int64_t>(dims[a] - 1, static_cast<std::int64_t>(
                                                        std::ceil(b.center[a] + reach)));
    }
    const double inv2s2 = 1.0 / (2.0 * b.sigma * b.sigma);
    for (std::int64_t d = lo[0]; d <= hi[0]; ++d) {
        const double dd = static_cast<double>(d) - b.center[0];
        for (std::int64_t w = lo[1]; w <= hi[1]; ++w) {
            const double dw = static_cast<double>(w) - b.center[1];
            for (std::int64_t h = lo[2]; h <= hi[2]; ++h) {
                const double dh = static_cast<double>(h) - b.center[2];
                const double r2 = dd * dd + dw * dw + dh * dh;
                if (r2 > reach * reach) continue;
                pet.at(d, w, h) += static_cast<float>(amplitude *
                                                      std::exp(-r2 * inv2s2));
            }
        }
    }
}

LesionMask isocontour_mask(const Index3& dims, const PhantomBlob& b) {
    LesionMask m(dims);
    const double radius = b.sigma * std::sqrt(2.0 * std::log(2.0));
    Index3 lo, hi;
    for (int a = 0; a < 3; ++a) {
        lo[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(
                                              std::floor(b.center[a] - radius)));
        hi[a] = std::min<std::int64_t>(dims[a] - 1, static_cast<std::int64_t>(
                                                        std::ceil(b.center[a] + radius)));
    }
    for (std::int64_t d = lo[0]; d <= hi[0]; ++d) {
        const double dd = static_cast<double>(d) - b.center[0];
        for (std::int64_t w = lo[1]; w <= hi[1]; ++w) {
            const double dw = static_cast<double>(w) - b.center[1];
            for (std::int64_t h = lo[2]; h <= hi[2]; ++h) {
                const double dh = static_cast<double>(h) - b.center[2];
                if (dd * dd + dw * dw + dh * dh <= radius * radius) {
                    m.set(d, w, h);
                }
            }
        }
    }
    return m;
}

}  // namespace

PhantomOutput make_phantom(const Phantom& p, std::uint64_t seed) {
    p.validate();
    Volume3D pet(p.dims, p.spacing, {0.0, 0.0, 0.0}, Modality::PET);
    if (p.background != 0.0) {
        std::fill(pet.data().begin(), pet.data().end(),
                  static_cast<float>(p.background));
    }
    for (const PhantomBlob& b : p.blobs) {
        add_blob(pet, b, b.peak - p.background);
    }
    if (p.noise_amplitude > 0.0) {
        UniformRng rng(seed);
        for (float& v : pet.data()) {
            const double n = (2.0 * rng.next_double() - 1.0) * p.noise_amplitude;
            v = std::max(0.0f, v + static_cast<float>(n));
        }
    }

    PhantomOutput out{std::move(pet), {}, {}};
    std::string report;
    char line[160];
    for (std::size_t i = 0; i < p.blobs.size(); ++i) {
        const PhantomBlob& b = p.blobs[i];
        out.ground_truth.push_back(isocontour_mask(p.dims, b));
        const char* site = kPhantomSites[i % (sizeof(kPhantomSites) /
                                              sizeof(kPhantomSites[0]))];
        // 1-based slice numbering, as reports use.
        std::snprintf(line, sizeof(line),
                      "Hypermetabolic focus in the %s, SUV max %.1f, slice %lld.\n",
                      site, b.peak,
                      static_cast<long long>(std::llround(b.center[0])) + 1);
        report += line;
    }
    if (p.blobs.empty()) {
        report = "No abnormal hypermetabolic focus is identified.\n";
    }
    out.report_text = std::move(report);
    return out;
}

Volume3D make_phantom_ct(const Phantom& p) {
    p.validate();
    Volume3D ct(p.dims, p.spacing, {0.0, 0.0, 0.0}, Modality::CT);
    for (const PhantomBlob& b : p.blobs) {
        PhantomBlob soft = b;
        add_blob(ct, soft, 40.0);
    }
    return ct;
}

Phantom random_phantom(std::uint64_t seed, const Index3& dims, int blob_count,
                       bool with_background) {
    if (blob_count < 0) throw Error("blob_count must be >= 0");
    UniformRng rng(splitmix64(seed));
    Phantom p;
    p.dims = dims;
    p.spacing = {3.0, 3.0, 3.0};
    p.background = with_background ? rng.next_double(1.0, 2.0) : 0.0;

    // Peaks must clear the background when thresholded at half the reported
    // value, with margin to spare; see lesion-seg SegParams defaults.
    const double min_peak =
        std::max(3.0, 2.0 * (p.background + 0.6));

    const double edge_margin = 12.0;
    int attempts = 0;
    while (static_cast<int>(p.blobs.size()) < blob_count && attempts < 10000) {
        ++attempts;
        PhantomBlob b;
        b.sigma = rng.next_double(2.0, 4.0);
        const double peak = rng.next_double(min_peak, 15.0);
        b.peak = std::round(peak * 10.0) / 10.0;  // reports carry one decimal
        for (int a = 0; a < 3; ++a) {
            const double lo = edge_margin;
            const double hi = static_cast<double>(dims[a] - 1) - edge_margin;
            if (hi <= lo) throw Error("phantom dims too small for blob placement");
            b.center[a] = std::floor(rng.next_double(lo, hi));  // on-grid center
        }
        bool ok = true;
        for (const PhantomBlob& other : p.blobs) {
            double dist2 = 0.0;
            for (int a = 0; a < 3; ++a) {
                const double d = b.center[a] - other.center[a];
                dist2 += d * d;
            }
            const double min_dist = 6.0 * (b.sigma + other.sigma);
            if (dist2 < min_dist * min_dist) {
                ok = false;
                break;
            }
            // Distinct reported values keep component selection unambiguous.
            if (std::abs(b.peak - other.peak) < 0.25) {
                ok = false;
                break;
            }
        }
        if (ok) p.blobs.push_back(b);
    }
    if (static_cast<int>(p.blobs.size()) != blob_count) {
        throw Error("could not place all phantom blobs; grid too crowded");
    }
    return p;
}

void write_phantom_exam(const Phantom& p, std::uint64_t seed,
                        const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const PhantomOutput out = make_phantom(p, seed);
    save_nifti(out.pet, (fs::path(dir) / "pet.nii.gz").string());
    save_nifti(make_phantom_ct(p), (fs::path(dir) / "ct.nii.gz").string());
    {
        std::ofstream report(fs::path(dir) / "report.txt");
        if (!report) throw Error("cannot write report.txt under " + dir);
        report << out.report_text;
    }
    for (std::size_t i = 0; i < out.ground_truth.size(); ++i) {
        save_nifti_mask(out.ground_truth[i], p.spacing, {0.0, 0.0, 0.0},
                        (fs::path(dir) / ("gt_mask_" + std::to_string(i) + ".nii.gz"))
                            .string());
    }
}

}  // namespace petgrid
