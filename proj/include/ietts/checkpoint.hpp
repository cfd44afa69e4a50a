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

// Binary checkpoint container.
//
// Layout (all integers little-endian):
//   "iETTS-CKPT-1"                         12-byte magic
//   u32 section_count
//   per section:
//     u32 name_len, name bytes
//     u8  dtype (0 = float64, 1 = uint64)
//     u32 rank, rank x u64 dims
//     u64 count, count x 8-byte values
//   u64 FNV-1a of every preceding byte
//
// Parameter sets are stored one section per tensor as "<prefix>.<name>".

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ietts/nn.hpp"
#include "ietts/optim.hpp"
#include "ietts/rng.hpp"

namespace ietts::ckpt {

inline constexpr std::string_view kMagic = "iETTS-CKPT-1";

enum class Dtype : std::uint8_t { kF64 = 0, kU64 = 1 };

struct Section {
  std::string name;
  Dtype dtype = Dtype::kF64;
  std::vector<std::uint64_t> dims;
  std::vector<double> f64;
  std::vector<std::uint64_t> u64;

  friend bool operator==(const Section&, const Section&) = default;
};

class Checkpoint {
 public:
  void put_f64(std::string name, std::vector<double> values, std::vector<std::uint64_t> dims = {});
  void put_u64(std::string name, std::vector<std::uint64_t> values, std::vector<std::uint64_t> dims = {});

  bool has(std::string_view name) const;
  const Section& get(std::string_view name) const;
  // Throw FormatError if the section is missing or has another dtype.
  const std::vector<double>& f64(std::string_view name) const;
  const std::vector<std::uint64_t>& u64(std::string_view name) const;
  std::uint64_t u64_scalar(std::string_view name) const;

  void put_params(std::string_view prefix, const nn::ParameterSet& params);
  // Copies values into an existing set; every tensor must be present with a
  // matching shape.
  void load_params(std::string_view prefix, nn::ParameterSet& params) const;

  void put_adam(std::string_view prefix, const optim::Adam& adam, const nn::ParameterSet& params);
  void load_adam(std::string_view prefix, optim::Adam& adam, const nn::ParameterSet& params) const;

  void put_rng(std::string name, const Rng& rng);
  void load_rng(std::string_view name, Rng& rng) const;

  const std::vector<Section>& sections() const { return sections_; }

  std::string serialize() const;
  // Throws FormatError on bad magic, truncation or checksum mismatch.
  static Checkpoint parse(std::string_view bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;

 private:
  std::vector<Section> sections_;
  Section& upsert(std::string name);
};

}  // namespace ietts::ckpt
