// AVX-512F kernels. Same algorithms as the AVX2 table with 8-wide lanes and
// masked tails.

#include <immintrin.h>

#include <algorithm>

#include "simd/kernels.hpp"

namespace cwm::simd::detail {
namespace {

constexpr std::size_t kKc = 256;

// MR x (8 * NV) register tile of C accumulated over kc steps. Only the last
// vector column is masked, and only when MASK is set.
template <int MR, int NV, bool MASK>
[[gnu::always_inline]] inline void tile(std::size_t kc, const double* a, std::size_t ar, std::size_t ac, const double* b,
                 std::size_t ldb, double* c, std::size_t ldc, bool load_c, __mmask8 last) {
  __m512d acc[MR][NV];
  for (int r = 0; r < MR; ++r) {
    for (int v = 0; v < NV; ++v) {
      if (!load_c) {
        acc[r][v] = _mm512_setzero_pd();
      } else if (MASK && v == NV - 1) {
        acc[r][v] = _mm512_maskz_loadu_pd(last, c + r * ldc + 8 * v);
      } else {
        acc[r][v] = _mm512_loadu_pd(c + r * ldc + 8 * v);
      }
    }
  }
  const double* ap[MR];
  for (int r = 0; r < MR; ++r) ap[r] = a + r * ar;
  for (std::size_t p = 0; p < kc; ++p) {
    __m512d bv[NV];
    for (int v = 0; v < NV; ++v) {
      bv[v] = (MASK && v == NV - 1) ? _mm512_maskz_loadu_pd(last, b + 8 * v) : _mm512_loadu_pd(b + 8 * v);
    }
    b += ldb;
    for (int r = 0; r < MR; ++r) {
      const __m512d av = _mm512_set1_pd(*ap[r]);
      ap[r] += ac;
      for (int v = 0; v < NV; ++v) acc[r][v] = _mm512_fmadd_pd(av, bv[v], acc[r][v]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    for (int v = 0; v < NV; ++v) {
      if (MASK && v == NV - 1) {
        _mm512_mask_storeu_pd(c + r * ldc + 8 * v, last, acc[r][v]);
      } else {
        _mm512_storeu_pd(c + r * ldc + 8 * v, acc[r][v]);
      }
    }
  }
}

// One column strip of C, all rows, for k-block [kb, kb + kc).
template <int MR, int NV, bool MASK>
void strip(const GemmArgs& g, std::size_t kb, std::size_t kc, std::size_t j0, bool load_c, __mmask8 last) {
  const double* a = g.a + kb * g.a_col;
  const double* b = g.b + kb * g.ldb + j0;
  std::size_t i = 0;
  for (; i + MR <= g.m; i += MR) {
    tile<MR, NV, MASK>(kc, a + i * g.a_row, g.a_row, g.a_col, b, g.ldb, g.c + i * g.ldc + j0, g.ldc, load_c, last);
  }
  for (; i < g.m; ++i) {
    tile<1, NV, MASK>(kc, a + i * g.a_row, g.a_row, g.a_col, b, g.ldb, g.c + i * g.ldc + j0, g.ldc, load_c, last);
  }
}

void gemm_avx512(const GemmArgs& g) {
  if (g.k == 0) {
    if (!g.accumulate) {
      for (std::size_t i = 0; i < g.m; ++i) std::fill_n(g.c + i * g.ldc, g.n, 0.0);
    }
    return;
  }
  for (std::size_t kb = 0; kb < g.k; kb += kKc) {
    const std::size_t kc = std::min(kKc, g.k - kb);
    const bool load_c = g.accumulate || kb > 0;
    std::size_t j0 = 0;
    if (g.a_row == 1 && g.m > 1) {
      // Transposed A (weight gradients) takes 8 x 24 tiles.
      for (; j0 + 24 <= g.n; j0 += 24) strip<8, 3, false>(g, kb, kc, j0, load_c, 0xFF);
    }
    for (; j0 + 32 <= g.n; j0 += 32) strip<6, 4, false>(g, kb, kc, j0, load_c, 0xFF);
    for (; j0 + 16 <= g.n; j0 += 16) strip<8, 2, false>(g, kb, kc, j0, load_c, 0xFF);
    for (; j0 + 8 <= g.n; j0 += 8) strip<16, 1, false>(g, kb, kc, j0, load_c, 0xFF);
    if (j0 < g.n) {
      const auto last = static_cast<__mmask8>((1u << (g.n - j0)) - 1u);
      strip<16, 1, true>(g, kb, kc, j0, load_c, last);
    }
  }
}

// Range reduction by ln 2 (two-part constant), then a degree-13 Taylor
// polynomial on [-ln2/2, ln2/2].
inline __m512d exp8(__m512d x) {
  const __m512d lo = _mm512_set1_pd(-708.39641853226410622);
  const __m512d hi = _mm512_set1_pd(709.0);
  const __mmask8 underflow = _mm512_cmp_pd_mask(x, lo, _CMP_LT_OQ);
  x = _mm512_min_pd(_mm512_max_pd(x, lo), hi);

  const __m512d fx = _mm512_roundscale_pd(_mm512_mul_pd(x, _mm512_set1_pd(1.4426950408889634074)),
                                          _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm512_fnmadd_pd(fx, _mm512_set1_pd(6.93147180369123816490e-1), x);
  x = _mm512_fnmadd_pd(fx, _mm512_set1_pd(1.90821492927058770002e-10), x);

  __m512d p = _mm512_set1_pd(kExpTaylor[0]);
  for (std::size_t i = 1; i < kExpTaylor.size(); ++i) p = _mm512_fmadd_pd(p, x, _mm512_set1_pd(kExpTaylor[i]));
  p = _mm512_scalef_pd(p, fx);
  return _mm512_maskz_mov_pd(static_cast<__mmask8>(~underflow), p);
}

// tanh|x| = -m / (m + 2) with m = expm1(-2|x|). expm1 follows exp's range
// reduction, 2^n (expm1(r) + 1) - 1, with the polynomial's constant term
// dropped so small arguments keep full relative accuracy. Within a few ulp of
// std::tanh.
inline __m512d tanh8(__m512d x) {
  // Operand order makes a NaN input propagate.
  const __m512d ax = _mm512_min_pd(_mm512_set1_pd(22.0), _mm512_abs_pd(x));
  const __m512d y = _mm512_mul_pd(ax, _mm512_set1_pd(-2.0));
  const __m512d n = _mm512_roundscale_pd(_mm512_mul_pd(y, _mm512_set1_pd(1.4426950408889634074)),
                                         _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m512d r = _mm512_fnmadd_pd(n, _mm512_set1_pd(6.93147180369123816490e-1), y);
  r = _mm512_fnmadd_pd(n, _mm512_set1_pd(1.90821492927058770002e-10), r);
  __m512d p = _mm512_set1_pd(kExpTaylor[0]);
  for (std::size_t i = 1; i + 1 < kExpTaylor.size(); ++i) p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(kExpTaylor[i]));
  const __m512d s = _mm512_scalef_pd(_mm512_set1_pd(1.0), n);
  const __m512d m = _mm512_fmadd_pd(s, _mm512_mul_pd(p, r), _mm512_sub_pd(s, _mm512_set1_pd(1.0)));
  const __m512d t = _mm512_div_pd(m, _mm512_add_pd(m, _mm512_set1_pd(2.0)));
  return _mm512_or_pd(_mm512_abs_pd(t), _mm512_and_pd(x, _mm512_set1_pd(-0.0)));
}

template <__m512d (*F)(__m512d)>
void apply(const double* in, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm512_storeu_pd(out + i, F(_mm512_loadu_pd(in + i)));
  if (i < n) {
    const auto m = static_cast<__mmask8>((1u << (n - i)) - 1u);
    _mm512_mask_storeu_pd(out + i, m, F(_mm512_maskz_loadu_pd(m, in + i)));
  }
}

}  // namespace

const KernelTable kAvx512Table{Isa::avx512, "avx512", &gemm_avx512, &apply<exp8>, &apply<tanh8>};

}  // namespace cwm::simd::detail
