// AVX2 + FMA kernels. Compiled with -mavx2 -mfma; only reached through the
// dispatch table after a CPUID check.

#include <immintrin.h>

#include <algorithm>

#include "simd/kernels.hpp"

namespace cwm::simd::detail {
namespace {

constexpr std::size_t kKc = 256;

// MR x (4 * NV) register tile of C accumulated over kc steps.
template <int MR, int NV>
[[gnu::always_inline]] inline void tile(std::size_t kc, const double* a, std::size_t ar, std::size_t ac, const double* b,
                 std::size_t ldb, double* c, std::size_t ldc, bool load_c) {
  __m256d acc[MR][NV];
  for (int r = 0; r < MR; ++r) {
    for (int v = 0; v < NV; ++v) acc[r][v] = load_c ? _mm256_loadu_pd(c + r * ldc + 4 * v) : _mm256_setzero_pd();
  }
  const double* ap[MR];
  for (int r = 0; r < MR; ++r) ap[r] = a + r * ar;
  for (std::size_t p = 0; p < kc; ++p) {
    __m256d bv[NV];
    for (int v = 0; v < NV; ++v) bv[v] = _mm256_loadu_pd(b + 4 * v);
    b += ldb;
    for (int r = 0; r < MR; ++r) {
      const __m256d av = _mm256_broadcast_sd(ap[r]);
      ap[r] += ac;
      for (int v = 0; v < NV; ++v) acc[r][v] = _mm256_fmadd_pd(av, bv[v], acc[r][v]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    for (int v = 0; v < NV; ++v) _mm256_storeu_pd(c + r * ldc + 4 * v, acc[r][v]);
  }
}

template <int MR, int NV>
void strip(const GemmArgs& g, std::size_t kb, std::size_t kc, std::size_t j0, bool load_c) {
  const double* a = g.a + kb * g.a_col;
  const double* b = g.b + kb * g.ldb + j0;
  std::size_t i = 0;
  for (; i + MR <= g.m; i += MR) {
    tile<MR, NV>(kc, a + i * g.a_row, g.a_row, g.a_col, b, g.ldb, g.c + i * g.ldc + j0, g.ldc, load_c);
  }
  for (; i < g.m; ++i) tile<1, NV>(kc, a + i * g.a_row, g.a_row, g.a_col, b, g.ldb, g.c + i * g.ldc + j0, g.ldc, load_c);
}

void gemm_avx2(const GemmArgs& g) {
  if (g.k == 0) {
    if (!g.accumulate) {
      for (std::size_t i = 0; i < g.m; ++i) std::fill_n(g.c + i * g.ldc, g.n, 0.0);
    }
    return;
  }
  for (std::size_t kb = 0; kb < g.k; kb += kKc) {
    const std::size_t kc = std::min(kKc, g.k - kb);
    const bool load_c = g.accumulate || kb > 0;
    const double* a_blk = g.a + kb * g.a_col;
    const double* b_blk = g.b + kb * g.ldb;
    std::size_t j0 = 0;
    for (; j0 + 12 <= g.n; j0 += 12) strip<4, 3>(g, kb, kc, j0, load_c);
    for (; j0 + 8 <= g.n; j0 += 8) strip<6, 2>(g, kb, kc, j0, load_c);
    for (; j0 + 4 <= g.n; j0 += 4) strip<8, 1>(g, kb, kc, j0, load_c);
    for (; j0 < g.n; ++j0) {
      for (std::size_t i = 0; i < g.m; ++i) {
        double s = load_c ? g.c[i * g.ldc + j0] : 0.0;
        for (std::size_t p = 0; p < kc; ++p) s += a_blk[i * g.a_row + p * g.a_col] * b_blk[p * g.ldb + j0];
        g.c[i * g.ldc + j0] = s;
      }
    }
  }
}

// Range reduction by ln 2 (two-part constant), then a degree-13 Taylor
// polynomial on [-ln2/2, ln2/2].
inline __m256d exp4(__m256d x) {
  const __m256d lo = _mm256_set1_pd(-708.39641853226410622);
  const __m256d hi = _mm256_set1_pd(709.0);
  const __m256d underflow = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  x = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

  const __m256d fx = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634074)),
                                     _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_pd(fx, _mm256_set1_pd(6.93147180369123816490e-1), x);
  x = _mm256_fnmadd_pd(fx, _mm256_set1_pd(1.90821492927058770002e-10), x);

  __m256d p = _mm256_set1_pd(kExpTaylor[0]);
  for (std::size_t i = 1; i < kExpTaylor.size(); ++i) p = _mm256_fmadd_pd(p, x, _mm256_set1_pd(kExpTaylor[i]));

  // 2^fx via the exponent field. fx lies in [-1022, 1023] after clamping;
  // split it in two so each factor stays a normal number.
  const __m256d half = _mm256_floor_pd(_mm256_mul_pd(fx, _mm256_set1_pd(0.5)));
  const __m256d rest = _mm256_sub_pd(fx, half);
  auto pow2 = [](__m256d e) {
    const __m256d biased = _mm256_add_pd(e, _mm256_set1_pd(1023.0 + 4503599627370496.0));
    return _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_castpd_si256(biased), 52));
  };
  p = _mm256_mul_pd(_mm256_mul_pd(p, pow2(half)), pow2(rest));
  return _mm256_andnot_pd(underflow, p);
}

// tanh|x| = -m / (m + 2) with m = expm1(-2|x|). expm1 follows exp's range
// reduction, 2^n (expm1(r) + 1) - 1, with the polynomial's constant term
// dropped so small arguments keep full relative accuracy. Within a few ulp of
// std::tanh.
inline __m256d tanh4(__m256d x) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  // Operand order makes a NaN input propagate.
  const __m256d ax = _mm256_min_pd(_mm256_set1_pd(22.0), _mm256_andnot_pd(sign_mask, x));
  const __m256d y = _mm256_mul_pd(ax, _mm256_set1_pd(-2.0));
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(y, _mm256_set1_pd(1.4426950408889634074)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93147180369123816490e-1), y);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.90821492927058770002e-10), r);
  __m256d p = _mm256_set1_pd(kExpTaylor[0]);
  for (std::size_t i = 1; i + 1 < kExpTaylor.size(); ++i) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kExpTaylor[i]));
  // 2^n through the exponent field; n lies in [-64, 0].
  const __m256d biased = _mm256_add_pd(n, _mm256_set1_pd(1023.0 + 4503599627370496.0));
  const __m256d s = _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_castpd_si256(biased), 52));
  const __m256d m = _mm256_fmadd_pd(s, _mm256_mul_pd(p, r), _mm256_sub_pd(s, _mm256_set1_pd(1.0)));
  const __m256d t = _mm256_div_pd(m, _mm256_add_pd(m, _mm256_set1_pd(2.0)));
  return _mm256_or_pd(_mm256_andnot_pd(sign_mask, t), _mm256_and_pd(sign_mask, x));
}

template <__m256d (*F)(__m256d)>
void apply(const double* in, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, F(_mm256_loadu_pd(in + i)));
  if (i < n) {
    alignas(32) double buf[4] = {0.0, 0.0, 0.0, 0.0};
    std::copy(in + i, in + n, buf);
    _mm256_store_pd(buf, F(_mm256_load_pd(buf)));
    std::copy(buf, buf + (n - i), out + i);
  }
}

}  // namespace

const KernelTable kAvx2Table{Isa::avx2, "avx2", &gemm_avx2, &apply<exp4>, &apply<tanh4>};

}  // namespace cwm::simd::detail
