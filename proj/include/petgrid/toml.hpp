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

#ifndef PETGRID_TOML_HPP
#define PETGRID_TOML_HPP

#include <string>

#include "json.hpp"

#include "petgrid/common.hpp"

namespace petgrid {

/// Parses the TOML subset used for configuration files into a JSON tree:
/// [dotted.table] headers, dotted keys, strings, integers, floats, booleans
/// and homogeneous scalar arrays (which may span lines). Comments start
/// with '#'. Duplicate keys and table/value conflicts are errors.
nlohmann::json parse_toml(const std::string& text);

nlohmann::json parse_toml_file(const std::string& path);

}  // namespace petgrid

#endif  // PETGRID_TOML_HPP
