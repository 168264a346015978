#include <atomic>
#include <cstdlib>
#include <string_view>

#include "kernels_impl.hpp"
#include "mate/numerics/kernels.hpp"

namespace mate::num::kernels {

namespace {

constexpr KernelTable kScalar{Isa::Scalar,    "scalar",        scalar::dot,
                              scalar::axpy,   scalar::gemm_nn, scalar::gemm_nt,
                              scalar::gemm_tn};

#if defined(MATE_HAVE_AVX2)
constexpr KernelTable kAvx2{Isa::Avx2,  "avx2+fma",    avx2::dot,    avx2::axpy,
                            avx2::gemm_nn, avx2::gemm_nt, avx2::gemm_tn};
#endif

bool cpu_has_avx2() noexcept {
#if defined(MATE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* pick_default() noexcept {
  if (const char* env = std::getenv("MATE_KERNELS"); env && std::string_view(env) == "scalar") {
    return &kScalar;
  }
  if (const KernelTable* t = avx2_table()) {
    return t;
  }
  return &kScalar;
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> table{pick_default()};
  return table;
}

}  // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

const KernelTable* avx2_table() noexcept {
#if defined(MATE_HAVE_AVX2)
  static const bool supported = cpu_has_avx2();
  return supported ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

bool select(Isa isa) noexcept {
  const KernelTable* table = isa == Isa::Scalar ? &kScalar : avx2_table();
  if (table == nullptr) {
    return false;
  }
  current().store(table, std::memory_order_relaxed);
  return true;
}

void select_default() noexcept { current().store(pick_default(), std::memory_order_relaxed); }

}  // namespace mate::num::kernels
