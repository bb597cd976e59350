#include <cmath>

#include "doctest.h"
#include "mmvb/linalg.hpp"
#include "mmvb/rng.hpp"
#include "testutil.hpp"

using namespace mmvb;
using namespace mmvb::linalg;

namespace {
Tensor random_spd(Rng& rng, int64_t n) {
    Tensor a = testutil::random_tensor(rng, {n, n});
    Tensor s = matmul_tn(a, a);
    for (int64_t i = 0; i < n; ++i) s.at(i, i) += 0.5;
    return s;
}
}  // namespace

TEST_CASE("cholesky reconstructs and solves") {
    Rng rng(21);
    Tensor a = random_spd(rng, 6);
    Tensor l = cholesky(a);
    Tensor rec = matmul_nt(l, l);
    CHECK(testutil::max_abs_diff(rec, a) < 1e-10);

    Tensor b = testutil::random_tensor(rng, {6});
    Tensor x = cholesky_solve(l, b);
    Tensor ax = matvec(a, x);
    CHECK(testutil::max_abs_diff(ax, b) < 1e-9);
}

TEST_CASE("cholesky rejects non-positive-definite input") {
    Tensor a({2, 2}, {1.0, 2.0, 2.0, 1.0});
    CHECK_THROWS_AS((void)cholesky(a), NumericError);
}

TEST_CASE("jacobi eigen reproduces A = V diag(w) V^T with orthonormal V") {
    Rng rng(22);
    for (int64_t n : {2, 5, 17}) {
        Tensor a = random_spd(rng, n);
        SymEig e = jacobi_eigen(a);
        // descending order
        for (int64_t i = 1; i < n; ++i) CHECK(e.values[i] <= e.values[i - 1] + 1e-12);
        Tensor vtv = matmul_tn(e.vectors, e.vectors);
        CHECK(testutil::max_abs_diff(vtv, identity(n)) < 1e-10);
        // reconstruction
        Tensor scaled = e.vectors;
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j) scaled.at(i, j) *= e.values[j];
        Tensor rec = matmul_nt(scaled, e.vectors);
        CHECK(testutil::max_abs_diff(rec, a) < 1e-9);
    }
}

TEST_CASE("jacobi eigen matches the eigenvalue-product log-det identity") {
    Rng rng(23);
    Tensor a = random_spd(rng, 5);
    SymEig e = jacobi_eigen(a);
    double logdet_eig = 0.0;
    for (int64_t i = 0; i < 5; ++i) logdet_eig += std::log(e.values[i]);
    CHECK(logdet_eig == doctest::Approx(cholesky_logdet(cholesky(a))).epsilon(1e-10));
}

TEST_CASE("thin QR has orthonormal columns spanning the input") {
    Rng rng(24);
    Tensor a = testutil::random_tensor(rng, {8, 3});
    Tensor q = qr_q(a);
    Tensor qtq = matmul_tn(q, q);
    CHECK(testutil::max_abs_diff(qtq, identity(3)) < 1e-10);
    auto angles = principal_angles(a, q);
    for (double th : angles) CHECK(th < 1e-8);
}

TEST_CASE("principal angles detect orthogonal subspaces") {
    Tensor a({4, 1}, {1.0, 0.0, 0.0, 0.0});
    Tensor b({4, 1}, {0.0, 1.0, 0.0, 0.0});
    auto angles = principal_angles(a, b);
    CHECK(angles[0] == doctest::Approx(M_PI / 2).epsilon(1e-12));
}

TEST_CASE("inverse sqrt whitens") {
    Rng rng(25);
    Tensor a = random_spd(rng, 4);
    Tensor w = inverse_sqrt_sym(a, 0.0);
    Tensor white = matmul(matmul(w, a), w);
    CHECK(testutil::max_abs_diff(white, identity(4)) < 1e-9);
}

TEST_CASE("singular values of a diagonal matrix") {
    Tensor a = Tensor::zeros({3, 3});
    a.at(0, 0) = 3.0;
    a.at(1, 1) = -2.0;
    a.at(2, 2) = 0.5;
    auto sv = singular_values(a);
    CHECK(sv[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(sv[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(sv[2] == doctest::Approx(0.5).epsilon(1e-12));
}
