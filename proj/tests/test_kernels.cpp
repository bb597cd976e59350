#include <omp.h>

#include "doctest.h"
#include "mmvb/kernels.hpp"
#include "mmvb/rng.hpp"
#include "testutil.hpp"

using namespace mmvb;

namespace {
std::vector<double> random_vec(Rng& rng, int64_t n) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.normal();
    return v;
}
}  // namespace

TEST_CASE("serial and parallel matmul are bit-identical") {
    Rng rng(1);
    for (auto [m, k, n] : {std::tuple<int64_t, int64_t, int64_t>{3, 4, 5},
                           {64, 64, 64},
                           {129, 65, 33}}) {
        auto a = random_vec(rng, m * k);
        auto b = random_vec(rng, k * n);
        std::vector<double> cs(static_cast<size_t>(m * n)), cp(static_cast<size_t>(m * n));
        kernels::serial::matmul(a.data(), b.data(), cs.data(), m, k, n);
        kernels::parallel::matmul(a.data(), b.data(), cp.data(), m, k, n);
        CHECK(cs == cp);
    }
}

TEST_CASE("serial and parallel reductions are bit-identical across thread counts") {
    Rng rng(2);
    auto v = random_vec(rng, 100000);
    const double want = kernels::serial::sum_blocked(v.data(), 100000);
    for (int threads : {1, 2, 4}) {
        omp_set_num_threads(threads);
        CHECK(kernels::parallel::sum_blocked(v.data(), 100000) == want);
    }
    omp_set_num_threads(omp_get_num_procs());
}

TEST_CASE("serial and parallel softmax and layer norm agree bitwise") {
    Rng rng(3);
    const int64_t r = 200, c = 300;
    auto x = random_vec(rng, r * c);
    auto gain = random_vec(rng, c);
    auto shift = random_vec(rng, c);
    std::vector<double> o1(static_cast<size_t>(r * c)), o2(static_cast<size_t>(r * c));
    kernels::serial::softmax_rows(x.data(), o1.data(), r, c);
    kernels::parallel::softmax_rows(x.data(), o2.data(), r, c);
    CHECK(o1 == o2);

    std::vector<double> y1(static_cast<size_t>(r * c)), y2(static_cast<size_t>(r * c));
    std::vector<double> is1(static_cast<size_t>(r)), is2(static_cast<size_t>(r));
    std::vector<double> mu1(static_cast<size_t>(r)), mu2(static_cast<size_t>(r));
    kernels::serial::layer_norm_rows(x.data(), gain.data(), shift.data(), y1.data(), is1.data(),
                                     mu1.data(), r, c, 1e-5);
    kernels::parallel::layer_norm_rows(x.data(), gain.data(), shift.data(), y2.data(), is2.data(),
                                       mu2.data(), r, c, 1e-5);
    CHECK(y1 == y2);
}

TEST_CASE("backend switch dispatches without changing results") {
    Rng rng(4);
    auto a = random_vec(rng, 32 * 48);
    auto b = random_vec(rng, 48 * 16);
    std::vector<double> c1(32 * 16), c2(32 * 16);
    kernels::set_parallel(false);
    kernels::matmul(a.data(), b.data(), c1.data(), 32, 48, 16);
    kernels::set_parallel(true);
    kernels::matmul(a.data(), b.data(), c2.data(), 32, 48, 16);
    CHECK(c1 == c2);
}

TEST_CASE("masked softmax puts exact zeros on masked columns") {
    Rng rng(5);
    const int64_t r = 4, c = 6;
    auto x = random_vec(rng, r * c);
    std::vector<uint8_t> mask{1, 0, 1, 1, 0, 1};
    std::vector<double> out(static_cast<size_t>(r * c));
    kernels::masked_softmax_rows(x.data(), mask.data(), out.data(), r, c);
    for (int64_t i = 0; i < r; ++i) {
        double total = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            if (!mask[static_cast<size_t>(j)]) CHECK(out[static_cast<size_t>(i * c + j)] == 0.0);
            total += out[static_cast<size_t>(i * c + j)];
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}
