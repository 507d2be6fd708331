#include <cmath>

#include "simd/kernels.hpp"

namespace cwm::simd::detail {
namespace {

void gemm_scalar(const GemmArgs& g) {
  for (std::size_t i = 0; i < g.m; ++i) {
    double* c = g.c + i * g.ldc;
    if (!g.accumulate) {
      for (std::size_t j = 0; j < g.n; ++j) c[j] = 0.0;
    }
    for (std::size_t p = 0; p < g.k; ++p) {
      const double a = g.a[i * g.a_row + p * g.a_col];
      const double* b = g.b + p * g.ldb;
      for (std::size_t j = 0; j < g.n; ++j) c[j] += a * b[j];
    }
  }
}

void exp_array(const double* in, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(in[i]);
}

void tanh_array(const double* in, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
}

}  // namespace


const KernelTable kScalarTable{Isa::scalar, "scalar", &gemm_scalar, &exp_array, &tanh_array};

}  // namespace cwm::simd::detail
