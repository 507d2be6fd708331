#include <cstdlib>
#include <string>

#include "simd/kernels.hpp"

namespace cwm::simd {
namespace {

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
#ifdef CWM_HAVE_X86_KERNELS
    case Isa::avx2:
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Isa::avx512:
      return __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512dq") &&
             __builtin_cpu_supports("fma");
#endif
    default:
      return false;
  }
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("CWM_SIMD")) {
    const std::string want(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::avx512}) {
      if (want == name(isa)) {
        if (const KernelTable* t = table_for(isa)) return t;
      }
    }
  }
  const KernelTable* best = &detail::kScalarTable;
  for (Isa isa : available()) best = table_for(isa);
  return best;
}

const KernelTable*& current() {
  static const KernelTable* table = initial_table();
  return table;
}

}  // namespace

std::string_view name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::avx512: return "avx512";
  }
  return "unknown";
}

const KernelTable* table_for(Isa isa) {
  if (!cpu_supports(isa)) return nullptr;
  switch (isa) {
    case Isa::scalar:
      return &detail::kScalarTable;
#ifdef CWM_HAVE_X86_KERNELS
    case Isa::avx2:
      return &detail::kAvx2Table;
    case Isa::avx512:
      return &detail::kAvx512Table;
#endif
    default:
      return nullptr;
  }
}

std::vector<Isa> available() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::avx512}) {
    if (table_for(isa) != nullptr) out.push_back(isa);
  }
  return out;
}

const KernelTable& active() { return *current(); }

bool select(Isa isa) {
  const KernelTable* t = table_for(isa);
  if (t == nullptr) return false;
  current() = t;
  return true;
}

}  // namespace cwm::simd
