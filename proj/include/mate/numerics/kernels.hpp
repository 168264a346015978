#pragma once

// Inner-loop arithmetic used by the tensor ops. Each routine exists as a
// scalar reference and, on x86-64, an AVX2+FMA variant; the active table is
// picked once at startup from CPUID and can be overridden (tests pin both).
//
// All matrices are row-major and dense. The gemm routines accumulate into C.
// gemm_nn and gemm_nt compute row i of C from row i of A alone, with the same
// operation order for every row, so stacking independent problems along rows
// never changes a result bit.

#include <cstddef>
#include <string_view>

namespace mate::num::kernels {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  Isa isa;
  std::string_view name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[MxN] += A[MxK] * B[KxN]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // C[MxN] += A[MxK] * B[NxK]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // C[MxN] += A[KxM]^T * B[KxN]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
};

const KernelTable& scalar_table() noexcept;

/// nullptr when the build has no AVX2 variant or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table() noexcept;

/// The table every op dispatches through.
const KernelTable& active() noexcept;

/// Pins the active table. Returns false (and leaves the table alone) if the
/// requested variant is unavailable on this machine.
bool select(Isa isa) noexcept;

/// Restores CPU-based selection. MATE_KERNELS=scalar in the environment forces
/// the reference kernels.
void select_default() noexcept;

}  // namespace mate::num::kernels
