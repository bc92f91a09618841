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

#ifndef PETGRID_TEST_HELPERS_HPP
#define PETGRID_TEST_HELPERS_HPP

#include <filesystem>
#include <string>

#include "petgrid/volume.hpp"

namespace petgrid::testing {

inline std::string data_path(const std::string& rel) {
    return std::string(PETGRID_DATA_DIR) + "/" + rel;
}

/// Fresh scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("petgrid_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& rel = "") const {
        return rel.empty() ? path_.string() : (path_ / rel).string();
    }

private:
    std::filesystem::path path_;
};

inline Volume3D make_volume(Index3 dims, float fill = 0.0f,
                            Modality modality = Modality::PET,
                            Vec3 spacing = {3.0, 3.0, 3.0}) {
    std::vector<float> data(static_cast<std::size_t>(volume_of(dims)), fill);
    return Volume3D(dims, spacing, {0.0, 0.0, 0.0}, modality, std::move(data));
}

}  // namespace petgrid::testing

#endif  // PETGRID_TEST_HELPERS_HPP
