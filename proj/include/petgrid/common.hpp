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

#ifndef PETGRID_COMMON_HPP
#define PETGRID_COMMON_HPP

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace petgrid {

/// Base class for all petgrid error conditions.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Axis convention used throughout: axis 0 = depth (axial slice index),
// axis 1 = width, axis 2 = height. Arrays are row-major over (D, W, H),
// i.e. the height axis varies fastest in memory.
using Index3 = std::array<std::int64_t, 3>;
using Vec3 = std::array<double, 3>;

inline std::int64_t volume_of(const Index3& dims) {
    return dims[0] * dims[1] * dims[2];
}

inline std::string index3_to_string(const Index3& d) {
    return "(" + std::to_string(d[0]) + ", " + std::to_string(d[1]) + ", " +
           std::to_string(d[2]) + ")";
}

/// FNV-1a 64-bit hash, used for content addressing and seed derivation.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), seed);
}

/// SplitMix64 finalizer; mixes a 64-bit value into a well-distributed one.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Seedable uniform generator with a portable output sequence.
///
/// The engine is MT19937-64, whose output is fixed by the C++ standard.
/// Floating-point draws take the top 53 bits of the raw output, so the
/// mapping is bit-reproducible across platforms (std::uniform_real_distribution
/// is not guaranteed to be).
class UniformRng {
public:
    explicit UniformRng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1).
    double next_double() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double next_double(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    /// Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        // Rejection-free modulo is biased for huge n; fine for desk-scale use
        // where n << 2^64, but keep the debiasing loop anyway.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % n;
    }

private:
    std::mt19937_64 engine_;
};

/// Derives a per-lesion RNG seed from a base seed, an exam identifier and a
/// lesion index. Documented so external tooling can reproduce draws.
inline std::uint64_t derive_seed(std::uint64_t base_seed, std::string_view exam_id,
                                 std::uint64_t lesion_index) {
    std::uint64_t h = fnv1a64(exam_id);
    return splitmix64(base_seed ^ h ^ (0x9e3779b97f4a7c15ull * (lesion_index + 1)));
}

}  // namespace petgrid

#endif  // PETGRID_COMMON_HPP
