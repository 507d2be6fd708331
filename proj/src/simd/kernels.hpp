#pragma once

#include <array>

#include "cwm/simd.hpp"

namespace cwm::simd::detail {

extern const KernelTable kScalarTable;
#ifdef CWM_HAVE_X86_KERNELS
extern const KernelTable kAvx2Table;
extern const KernelTable kAvx512Table;
#endif

/// 1/13!, 1/12!, ..., 1/1!, 1: Horner coefficients for exp on [-ln2/2, ln2/2].
inline constexpr std::array<double, 14> kExpTaylor{
    1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0, 1.0 / 362880.0,
    1.0 / 40320.0,      1.0 / 5040.0,      1.0 / 720.0,      1.0 / 120.0,     1.0 / 24.0,
    1.0 / 6.0,          0.5,               1.0,              1.0};

}  // namespace cwm::simd::detail
