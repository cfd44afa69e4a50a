// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace ietts {

using Rng = std::mt19937_64;

// Independent, reproducible substreams from one run seed, e.g.
// make_rng(seed, "corpus") and make_rng(seed, "init.agent").
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);
Rng make_rng(std::uint64_t seed, std::string_view stream);

// Engine state as a flat word array, for checkpoints.
std::vector<std::uint64_t> rng_state(const Rng& rng);
void set_rng_state(Rng& rng, std::span<const std::uint64_t> state);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::span<const unsigned char> bytes,
                    std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::span<const double> values, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace ietts
