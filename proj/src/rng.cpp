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

#include "ietts/rng.hpp"

#include <cstring>
#include <sstream>

#include "ietts/error.hpp"

namespace ietts {

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t basis) {
  return fnv1a(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()), basis);
}

std::uint64_t fnv1a(std::span<const double> values, std::uint64_t basis) {
  return fnv1a(std::span(reinterpret_cast<const unsigned char*>(values.data()), values.size_bytes()),
               basis);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  // splitmix64 finaliser over the seed mixed with the stream name hash.
  std::uint64_t z = seed ^ fnv1a(stream);
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng make_rng(std::uint64_t seed, std::string_view stream) { return Rng(derive_seed(seed, stream)); }

std::vector<std::uint64_t> rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  std::istringstream is(os.str());
  std::vector<std::uint64_t> words;
  std::uint64_t w = 0;
  while (is >> w) words.push_back(w);
  return words;
}

void set_rng_state(Rng& rng, std::span<const std::uint64_t> state) {
  std::ostringstream os;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (i) os << ' ';
    os << state[i];
  }
  std::istringstream is(os.str());
  Rng restored;
  is >> restored;
  if (is.fail()) throw FormatError("invalid RNG state (" + std::to_string(state.size()) + " words)");
  rng = restored;
}

}  // namespace ietts
