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

#include <cstddef>
#include <string_view>

namespace ietts::kernels {

// Dense float64 inner loops used by the autodiff engine. Every routine
// accumulates into its output; callers zero the destination when needed.
// All matrices are row-major and densely packed.
struct KernelTable {
  // c[m x n] += a[m x k] * b[k x n]
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  // c[m x n] += a[m x k] * b[n x k]^T
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  // c[k x n] += a[m x k]^T * b[m x n]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

// True when the variant was compiled in and the running CPU supports it.
bool isa_available(Isa isa);

const KernelTable& table(Isa isa);

// Selected once on first use: the best available ISA, unless the
// IETTS_SIMD environment variable is set to "scalar".
Isa active_isa();
const KernelTable& active();

// Test hook. Throws std::invalid_argument if the ISA is unavailable.
void set_active_isa(Isa isa);

namespace scalar {
extern const KernelTable kTable;
}
namespace avx2 {
// Null entries when the AVX2 translation unit was not built.
extern const KernelTable kTable;
extern const bool kCompiled;
}  // namespace avx2

}  // namespace ietts::kernels
