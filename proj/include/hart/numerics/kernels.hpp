#pragma once

// Inner-loop arithmetic shared by every dense op. Each kernel has a portable
// scalar reference and, on x86-64, an AVX2+FMA variant. The variant is picked
// once at startup from CPUID (override with HART_KERNELS=scalar|avx2) and can
// be switched explicitly, which the equivalence tests rely on.
//
// Reduction order inside a kernel depends only on the vector length, never on
// how many rows are processed together, so a row's result does not change
// when unrelated rows change.

#include <cstddef>
#include <string_view>

namespace hart::num::kernels {

enum class Backend { scalar, avx2 };

struct KernelTable {
    // sum_i x[i] * y[i]
    double (*dot)(const double* x, const double* y, std::size_t n);
    // y[i] += a * x[i]
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    // C[M x N] += A[M x K] * B[K x N]
    void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n);
    // C[M x N] += A[M x K] * B[N x K]^T
    void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n);
    // C[M x N] += A[K x M]^T * B[K x N]
    void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n);
};

const KernelTable& scalar_table();
bool backend_available(Backend backend);
const KernelTable& table(Backend backend);

Backend active_backend();
void set_active_backend(Backend backend);
std::string_view backend_name(Backend backend);

inline const KernelTable& active() { return table(active_backend()); }

// RAII switch used by tests and benchmarks.
class ScopedBackend {
public:
    explicit ScopedBackend(Backend backend) : previous_(active_backend()) {
        set_active_backend(backend);
    }
    ~ScopedBackend() { set_active_backend(previous_); }
    ScopedBackend(const ScopedBackend&) = delete;
    ScopedBackend& operator=(const ScopedBackend&) = delete;

private:
    Backend previous_;
};

namespace detail {
#if defined(HART_WITH_AVX2)
const KernelTable& avx2_table();
#endif
}  // namespace detail

}  // namespace hart::num::kernels
