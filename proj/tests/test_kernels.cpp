#include <cmath>
#include <vector>

#include <doctest.h>

#include "pasmr/kernels.hpp"
#include "pasmr/rng.hpp"

using namespace pasmr;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double scale = 2.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-scale, scale);
    return v;
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double err = std::fabs(a[i] - b[i]);
        REQUIRE(err <= tol * std::max({1.0, std::fabs(a[i]), std::fabs(b[i])}));
    }
}

}  // namespace

TEST_CASE("scalar and avx2 kernels agree") {
    if (!avx2_supported()) return;  // scalar-only platform
    const Kernels& s = scalar_kernels();
    const Kernels& a = avx2_kernels();
    Rng rng(99);

    // sizes straddle the vector width, including remainders
    for (std::size_t n : {1u, 2u, 3u, 4u, 5u, 7u, 8u, 9u, 15u, 16u, 17u, 64u, 129u}) {
        auto x = random_vec(n, rng);
        auto y = random_vec(n, rng);

        CHECK(std::fabs(s.dot(x.data(), y.data(), n) - a.dot(x.data(), y.data(), n)) <=
              1e-12 * std::max(1.0, std::fabs(s.dot(x.data(), y.data(), n))));
        CHECK(std::fabs(s.sum(x.data(), n) - a.sum(x.data(), n)) <= 1e-12 * n);
        CHECK(s.max_value(x.data(), n) == a.max_value(x.data(), n));

        auto y1 = y, y2 = y;
        s.axpy(y1.data(), 0.37, x.data(), n);
        a.axpy(y2.data(), 0.37, x.data(), n);
        expect_close(y1, y2, 1e-13);

        y1 = y; y2 = y;
        s.mul_add(y1.data(), x.data(), y.data(), n);
        a.mul_add(y2.data(), x.data(), y.data(), n);
        expect_close(y1, y2, 1e-13);

        y1 = y; y2 = y;
        s.scale(y1.data(), -1.4, n);
        a.scale(y2.data(), -1.4, n);
        expect_close(y1, y2, 1e-13);
    }

    for (auto [rows, cols] : std::vector<std::pair<std::size_t, std::size_t>>{
             {1, 1}, {3, 5}, {8, 8}, {11, 7}, {64, 32}, {130, 33}}) {
        auto w = random_vec(rows * cols, rng);
        auto x = random_vec(cols, rng);
        auto g = random_vec(rows, rng);

        std::vector<double> y1(rows), y2(rows);
        s.matvec(y1.data(), w.data(), x.data(), rows, cols);
        a.matvec(y2.data(), w.data(), x.data(), rows, cols);
        expect_close(y1, y2, 1e-12);

        auto z1 = random_vec(cols, rng);
        auto z2 = z1;
        s.matvec_t_add(z1.data(), w.data(), g.data(), rows, cols);
        a.matvec_t_add(z2.data(), w.data(), g.data(), rows, cols);
        expect_close(z1, z2, 1e-12);

        auto w1 = w, w2 = w;
        s.ger_add(w1.data(), g.data(), x.data(), rows, cols);
        a.ger_add(w2.data(), g.data(), x.data(), rows, cols);
        expect_close(w1, w2, 1e-13);
    }
}

TEST_CASE("adam kernel is bit-identical across backends") {
    if (!avx2_supported()) return;
    Rng rng(3);
    for (std::size_t n : {1u, 4u, 5u, 63u, 64u, 200u}) {
        auto p1 = random_vec(n, rng), m1 = random_vec(n, rng, 0.1), v1 = random_vec(n, rng, 0.01);
        for (auto& x : v1) x = std::fabs(x);
        auto g = random_vec(n, rng);
        auto p2 = p1, m2 = m1, v2 = v1;
        scalar_kernels().adam_update(p1.data(), m1.data(), v1.data(), g.data(), n, 1e-3, 0.9,
                                     0.999, 1e-8, 0.1, 0.001);
        avx2_kernels().adam_update(p2.data(), m2.data(), v2.data(), g.data(), n, 1e-3, 0.9,
                                   0.999, 1e-8, 0.1, 0.001);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(p1[i] == p2[i]);
            CHECK(m1[i] == m2[i]);
            CHECK(v1[i] == v2[i]);
        }
    }
}

TEST_CASE("backend selection") {
    set_kernel_backend(KernelBackend::Scalar);
    CHECK(kernel_backend_name() == "scalar");
    set_kernel_backend(KernelBackend::Auto);
    if (avx2_supported()) CHECK(kernel_backend_name() == "avx2");
    CHECK_THROWS(parse_kernel_backend("sse9"));
}

TEST_CASE("rng streams are deterministic and distributions sane") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(7);
    for (int i = 0; i < 1000; ++i) {
        const double u = c.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const auto k = c.below(17);
        CHECK(k < 17);
    }
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
}
