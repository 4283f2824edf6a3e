#include "hart/numerics/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace hart::num::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(HART_WITH_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend detect() {
    if (const char* env = std::getenv("HART_KERNELS")) {
        const std::string v(env);
        if (v == "scalar") return Backend::scalar;
        if (v == "avx2" && cpu_has_avx2()) return Backend::avx2;
    }
    return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& current() {
    static std::atomic<Backend> b{detect()};
    return b;
}

}  // namespace

bool backend_available(Backend backend) {
    return backend == Backend::scalar || cpu_has_avx2();
}

const KernelTable& table(Backend backend) {
#if defined(HART_WITH_AVX2)
    if (backend == Backend::avx2) return detail::avx2_table();
#else
    (void)backend;
#endif
    return scalar_table();
}

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_active_backend(Backend backend) {
    if (!backend_available(backend)) {
        throw std::runtime_error("kernel backend '" + std::string(backend_name(backend)) +
                                 "' is not available on this host");
    }
    current().store(backend, std::memory_order_relaxed);
}

std::string_view backend_name(Backend backend) {
    return backend == Backend::avx2 ? "avx2" : "scalar";
}

}  // namespace hart::num::kernels
