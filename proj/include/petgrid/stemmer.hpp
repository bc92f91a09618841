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

#ifndef PETGRID_STEMMER_HPP
#define PETGRID_STEMMER_HPP

#include <string>
#include <string_view>

namespace petgrid {

/// Porter (1980) stemmer. Input is expected lowercase; words of length <= 2
/// are returned unchanged.
std::string porter_stem(std::string_view word);

}  // namespace petgrid

#endif  // PETGRID_STEMMER_HPP
