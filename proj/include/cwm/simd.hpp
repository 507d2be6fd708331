#pragma once

// Runtime-dispatched arithmetic kernels for the hot loops: dense matrix
// products in the classifier and elementwise exp/tanh. The scalar table is
// the reference; vector tables agree with it to a few ulp.

#include <cstddef>
#include <string_view>
#include <vector>

namespace cwm::simd {

enum class Isa { scalar, avx2, avx512 };

/// C (m x n) = A (m x k) * B (k x n), or C += A * B when accumulate is set.
/// A is addressed as a[i * a_row + p * a_col], which lets callers pass a
/// transposed view without copying. B and C are row-major with leading
/// dimensions ldb and ldc.
struct GemmArgs {
  std::size_t m, n, k;
  const double* a;
  std::size_t a_row, a_col;
  const double* b;
  std::size_t ldb;
  double* c;
  std::size_t ldc;
  bool accumulate;
};

struct KernelTable {
  Isa isa;
  const char* name;
  void (*gemm)(const GemmArgs&);
  /// out[i] = exp(in[i]). Inputs above 709 are outside the supported range.
  void (*exp)(const double* in, double* out, std::size_t n);
  /// out[i] = tanh(in[i]).
  void (*tanh)(const double* in, double* out, std::size_t n);
};

/// Kernel table for the best ISA supported by this CPU, unless overridden by
/// select() or the CWM_SIMD environment variable (scalar|avx2|avx512).
const KernelTable& active();

/// Table for a specific ISA, or nullptr when it was not compiled in or the CPU
/// lacks it.
const KernelTable* table_for(Isa isa);

/// Makes isa the active table. Returns false (and changes nothing) when it is
/// unavailable.
bool select(Isa isa);

std::vector<Isa> available();
std::string_view name(Isa isa);

}  // namespace cwm::simd
