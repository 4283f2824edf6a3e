#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "hart/numerics/kernels.hpp"
#include "hart/model/transformer.hpp"
#include "hart/numerics/ops.hpp"

namespace hart::num {
namespace {

using kernels::Backend;

std::vector<double> rand_vec(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

// Naive triple loops, independent of the kernel code.
std::vector<double> ref_gemm(const std::vector<double>& a, const std::vector<double>& b,
                             std::size_t m, std::size_t k, std::size_t n, char kind) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) {
                double av = kind == 't' ? a[p * m + i] : a[i * k + p];
                double bv = kind == 'n' ? b[j * k + p] : b[p * n + j];
                c[i * n + j] += av * bv;
            }
    return c;
}

TEST(Kernels, ScalarMatchesNaiveReference) {
    Rng rng(3);
    const auto& t = kernels::scalar_table();
    for (std::size_t m : {1u, 3u, 7u})
        for (std::size_t k : {1u, 4u, 9u})
            for (std::size_t n : {1u, 5u, 17u}) {
                auto a = rand_vec(rng, m * k);
                auto b = rand_vec(rng, k * n);
                std::vector<double> c(m * n, 0.0);
                t.gemm_nn(a.data(), b.data(), c.data(), m, k, n);
                auto r = ref_gemm(a, b, m, k, n, 'x');
                for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], r[i], 1e-12);

                auto bt = rand_vec(rng, n * k);
                std::fill(c.begin(), c.end(), 0.0);
                t.gemm_nt(a.data(), bt.data(), c.data(), m, k, n);
                r = ref_gemm(a, bt, m, k, n, 'n');
                for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], r[i], 1e-12);

                auto at = rand_vec(rng, k * m);
                std::fill(c.begin(), c.end(), 0.0);
                t.gemm_tn(at.data(), b.data(), c.data(), m, k, n);
                r = ref_gemm(at, b, m, k, n, 't');
                for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], r[i], 1e-12);
            }
}

TEST(Kernels, DotAndAxpy) {
    const auto& t = kernels::scalar_table();
    const double x[] = {1, 2, 3};
    double y[] = {4, 5, 6};
    EXPECT_EQ(t.dot(x, y, 3), 32.0);
    t.axpy(2.0, x, y, 3);
    EXPECT_EQ(y[0], 6.0);
    EXPECT_EQ(y[2], 12.0);
}

TEST(Kernels, Avx2MatchesScalar) {
    if (!kernels::backend_available(Backend::avx2)) GTEST_SKIP() << "no AVX2 on this host";
    Rng rng(11);
    const auto& s = kernels::table(Backend::scalar);
    const auto& v = kernels::table(Backend::avx2);
    for (std::size_t n = 0; n < 40; ++n) {
        auto x = rand_vec(rng, n);
        auto y = rand_vec(rng, n);
        EXPECT_NEAR(s.dot(x.data(), y.data(), n), v.dot(x.data(), y.data(), n), 1e-12);
        auto y1 = y, y2 = y;
        s.axpy(0.7, x.data(), y1.data(), n);
        v.axpy(0.7, x.data(), y2.data(), n);
        for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-14);
    }
    for (std::size_t m : {1u, 2u, 5u})
        for (std::size_t k : {1u, 3u, 8u, 13u})
            for (std::size_t n : {1u, 4u, 7u, 16u, 33u}) {
                auto a = rand_vec(rng, m * k);
                auto b = rand_vec(rng, k * n);
                auto bt = rand_vec(rng, n * k);
                auto at = rand_vec(rng, k * m);
                std::vector<double> c1(m * n, 0.5), c2(m * n, 0.5);
                s.gemm_nn(a.data(), b.data(), c1.data(), m, k, n);
                v.gemm_nn(a.data(), b.data(), c2.data(), m, k, n);
                for (std::size_t i = 0; i < c1.size(); ++i) EXPECT_NEAR(c1[i], c2[i], 1e-12);
                s.gemm_nt(a.data(), bt.data(), c1.data(), m, k, n);
                v.gemm_nt(a.data(), bt.data(), c2.data(), m, k, n);
                for (std::size_t i = 0; i < c1.size(); ++i) EXPECT_NEAR(c1[i], c2[i], 1e-12);
                s.gemm_tn(at.data(), b.data(), c1.data(), m, k, n);
                v.gemm_tn(at.data(), b.data(), c2.data(), m, k, n);
                for (std::size_t i = 0; i < c1.size(); ++i) EXPECT_NEAR(c1[i], c2[i], 1e-12);
            }
}

// A whole forward pass agrees across backends to rounding.
TEST(Kernels, ModelForwardMatchesAcrossBackends) {
    if (!kernels::backend_available(Backend::avx2)) GTEST_SKIP() << "no AVX2 on this host";
    auto cfg = testing::tiny_config(30, 16, 2, 2, 12);
    auto m = testing::generic_model(cfg, 5);
    std::vector<int> ids{3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 0, 0};
    std::vector<std::uint8_t> mask{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0};
    model::PlainOutput a, b;
    {
        kernels::ScopedBackend g(Backend::scalar);
        a = model::forward_block_plain(m, ids, mask);
    }
    {
        kernels::ScopedBackend g(Backend::avx2);
        b = model::forward_block_plain(m, ids, mask);
    }
    EXPECT_LT(max_abs_diff(a.logits, b.logits), 1e-10);
}

TEST(Kernels, ScopedBackendRestores) {
    const Backend before = kernels::active_backend();
    {
        kernels::ScopedBackend g(Backend::scalar);
        EXPECT_EQ(kernels::active_backend(), Backend::scalar);
    }
    EXPECT_EQ(kernels::active_backend(), before);
    EXPECT_EQ(kernels::backend_name(Backend::scalar), "scalar");
}

TEST(Kernels, UnavailableBackendThrows) {
    if (kernels::backend_available(Backend::avx2)) GTEST_SKIP() << "AVX2 present";
    EXPECT_THROW(kernels::set_active_backend(Backend::avx2), std::exception);
}

}  // namespace
}  // namespace hart::num
