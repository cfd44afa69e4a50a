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

#include "ietts/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ietts/error.hpp"

namespace ietts::ckpt {

namespace {

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}
  std::uint64_t le(int bytes, const char* what) {
    need(static_cast<std::size_t>(bytes), what);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) {
      throw FormatError("checkpoint truncated while reading " + std::string(what) + " at byte " + std::to_string(pos_));
    }
  }
  std::string_view b_;
  std::size_t pos_ = 0;
};

std::uint64_t product(const std::vector<std::uint64_t>& dims) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

Section& Checkpoint::upsert(std::string name) {
  Section fresh;
  fresh.name = std::move(name);
  for (auto& s : sections_)
    if (s.name == fresh.name) return s = std::move(fresh);
  sections_.push_back(std::move(fresh));
  return sections_.back();
}

void Checkpoint::put_f64(std::string name, std::vector<double> values, std::vector<std::uint64_t> dims) {
  if (dims.empty()) dims = {values.size()};
  if (product(dims) != values.size()) throw std::invalid_argument("checkpoint: dims do not match value count");
  Section& s = upsert(std::move(name));
  s.dtype = Dtype::kF64;
  s.dims = std::move(dims);
  s.f64 = std::move(values);
}

void Checkpoint::put_u64(std::string name, std::vector<std::uint64_t> values, std::vector<std::uint64_t> dims) {
  if (dims.empty()) dims = {values.size()};
  if (product(dims) != values.size()) throw std::invalid_argument("checkpoint: dims do not match value count");
  Section& s = upsert(std::move(name));
  s.dtype = Dtype::kU64;
  s.dims = std::move(dims);
  s.u64 = std::move(values);
}

bool Checkpoint::has(std::string_view name) const {
  for (const auto& s : sections_)
    if (s.name == name) return true;
  return false;
}

const Section& Checkpoint::get(std::string_view name) const {
  for (const auto& s : sections_)
    if (s.name == name) return s;
  throw FormatError("checkpoint: missing section '" + std::string(name) + "'");
}

const std::vector<double>& Checkpoint::f64(std::string_view name) const {
  const Section& s = get(name);
  if (s.dtype != Dtype::kF64) throw FormatError("checkpoint: section '" + s.name + "' is not float64");
  return s.f64;
}

const std::vector<std::uint64_t>& Checkpoint::u64(std::string_view name) const {
  const Section& s = get(name);
  if (s.dtype != Dtype::kU64) throw FormatError("checkpoint: section '" + s.name + "' is not uint64");
  return s.u64;
}

std::uint64_t Checkpoint::u64_scalar(std::string_view name) const {
  const auto& v = u64(name);
  if (v.size() != 1) throw FormatError("checkpoint: section '" + std::string(name) + "' is not a scalar");
  return v[0];
}

void Checkpoint::put_params(std::string_view prefix, const nn::ParameterSet& params) {
  const auto vars = params.vars();
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const auto& d = vars[i].shape().dims();
    put_f64(std::string(prefix) + "." + params.names()[i], {vars[i].data().begin(), vars[i].data().end()},
            {d.begin(), d.end()});
  }
}

void Checkpoint::load_params(std::string_view prefix, nn::ParameterSet& params) const {
  const auto vars = params.vars();
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const std::string name = std::string(prefix) + "." + params.names()[i];
    const Section& s = get(name);
    const auto& d = vars[i].shape().dims();
    if (s.dtype != Dtype::kF64 || s.dims != std::vector<std::uint64_t>(d.begin(), d.end())) {
      throw FormatError("checkpoint: section '" + name + "' does not match parameter shape " + vars[i].shape().str());
    }
    ad::Var v = vars[i];
    std::copy(s.f64.begin(), s.f64.end(), v.mutable_data().begin());
  }
}

void Checkpoint::put_adam(std::string_view prefix, const optim::Adam& adam, const nn::ParameterSet& params) {
  const std::string p(prefix);
  put_u64(p + ".step", {adam.steps()});
  const auto& names = params.names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    put_f64(p + ".m." + names[i], adam.first_moments()[i]);
    put_f64(p + ".v." + names[i], adam.second_moments()[i]);
  }
}

void Checkpoint::load_adam(std::string_view prefix, optim::Adam& adam, const nn::ParameterSet& params) const {
  const std::string p(prefix);
  std::vector<std::vector<double>> m, v;
  for (const auto& name : params.names()) {
    m.push_back(f64(p + ".m." + name));
    v.push_back(f64(p + ".v." + name));
  }
  try {
    adam.restore(u64_scalar(p + ".step"), std::move(m), std::move(v));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: optimizer state does not fit the model: ") + e.what());
  }
}

void Checkpoint::put_rng(std::string name, const Rng& rng) { put_u64(std::move(name), rng_state(rng)); }

void Checkpoint::load_rng(std::string_view name, Rng& rng) const {
  try {
    set_rng_state(rng, u64(name));
  } catch (const std::exception& e) {
    throw FormatError("checkpoint: bad rng state in '" + std::string(name) + "': " + e.what());
  }
}

std::string Checkpoint::serialize() const {
  std::string out(kMagic);
  put_le(out, sections_.size(), 4);
  for (const auto& s : sections_) {
    put_le(out, s.name.size(), 4);
    out += s.name;
    out.push_back(static_cast<char>(s.dtype));
    put_le(out, s.dims.size(), 4);
    for (auto d : s.dims) put_le(out, d, 8);
    const std::size_t n = s.dtype == Dtype::kF64 ? s.f64.size() : s.u64.size();
    put_le(out, n, 8);
    for (std::size_t i = 0; i < n; ++i) {
      put_le(out, s.dtype == Dtype::kF64 ? std::bit_cast<std::uint64_t>(s.f64[i]) : s.u64[i], 8);
    }
  }
  put_le(out, fnv1a(out), 8);
  return out;
}

Checkpoint Checkpoint::parse(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(kMagic.size(), "magic") != kMagic) throw FormatError("checkpoint: bad magic or unsupported version");
  Checkpoint c;
  const auto count = r.le(4, "section count");
  for (std::uint64_t k = 0; k < count; ++k) {
    Section s;
    const auto len = r.le(4, "section name length");
    s.name = std::string(r.bytes(len, "section name"));
    const auto dtype = r.le(1, "dtype");
    if (dtype > 1) throw FormatError("checkpoint: section '" + s.name + "' has unknown dtype " + std::to_string(dtype));
    s.dtype = static_cast<Dtype>(dtype);
    const auto rank = r.le(4, "rank");
    if (rank > 8) throw FormatError("checkpoint: section '" + s.name + "' has rank " + std::to_string(rank));
    for (std::uint64_t i = 0; i < rank; ++i) s.dims.push_back(r.le(8, "dims"));
    const auto n = r.le(8, "value count");
    if (n != product(s.dims)) throw FormatError("checkpoint: section '" + s.name + "' count does not match its shape");
    if (n > r.remaining() / 8) throw FormatError("checkpoint truncated in section '" + s.name + "'");
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto w = r.le(8, "values");
      if (s.dtype == Dtype::kF64) {
        s.f64.push_back(std::bit_cast<double>(w));
      } else {
        s.u64.push_back(w);
      }
    }
    if (c.has(s.name)) throw FormatError("checkpoint: duplicate section '" + s.name + "'");
    c.sections_.push_back(std::move(s));
  }
  const std::size_t body = r.pos();
  const auto stored = r.le(8, "checksum");
  if (stored != fnv1a(bytes.substr(0, body))) throw FormatError("checkpoint: checksum mismatch (corrupted file)");
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes after checksum");
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open '" + tmp.string() + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

}  // namespace ietts::ckpt
