#include <cmath>

#include "doctest.h"
#include "mmvb/distributions.hpp"
#include "mmvb/linalg.hpp"
#include "testutil.hpp"

using namespace mmvb;
using testutil::quadrature;

namespace {
DiagGaussian make_diag(Tape& t, std::vector<double> mean, std::vector<double> log_std) {
    return DiagGaussian::make(t.constant(tensor_from(mean)), t.constant(tensor_from(log_std)));
}
}  // namespace

TEST_CASE("standard normal log density at the mode") {
    Tape t;
    DiagGaussian p = make_diag(t, {0.0}, {0.0});
    Value lp = diag_log_prob(t.constant(tensor_from({0.0})), p);
    CHECK(lp.val().item() == doctest::Approx(-0.5 * std::log(2 * M_PI)).epsilon(1e-12));
    Value lp1 = diag_log_prob(t.constant(tensor_from({1.0})), p);
    CHECK(lp1.val().item() == doctest::Approx(-0.5 * std::log(2 * M_PI) - 0.5).epsilon(1e-12));
}

TEST_CASE("diag log prob matches quadrature-normalized density") {
    Tape t;
    DiagGaussian p = make_diag(t, {0.0, 0.0}, {0.0, std::log(2.0)});
    Value lp = diag_log_prob(t.constant(tensor_from({1.0, 2.0})), p);
    // independent per-dimension quadrature of the unnormalized density;
    // grid wide enough that the sd=2 tail is negligible
    auto density = [](double x, double sd) { return std::exp(-0.5 * x * x / (sd * sd)); };
    double z1 = quadrature([&](double x) { return density(x, 1.0); });
    double z2 = quadrature([&](double x) { return density(x, 2.0); }, -20.0, 20.0, 4001);
    double expected = std::log(density(1.0, 1.0) / z1) + std::log(density(2.0, 2.0) / z2);
    CHECK(lp.val().item() == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("diag sample reparameterization") {
    Tape t;
    DiagGaussian p = make_diag(t, {1.5, -1.0}, {0.0, 0.0});
    Value z0 = diag_sample(p, Tensor::zeros({2}));
    CHECK(z0.val()[0] == 1.5);
    CHECK(z0.val()[1] == -1.0);
    Value z1 = diag_sample(p, tensor_from({0.3, -0.7}));
    CHECK(z1.val()[0] == doctest::Approx(1.8).epsilon(1e-12));
    CHECK(z1.val()[1] == doctest::Approx(-1.7).epsilon(1e-12));
}

TEST_CASE("sample mean approaches the mean") {
    Tape t;
    DiagGaussian p = make_diag(t, {0.7}, {std::log(0.5)});
    Rng rng(77);
    const int n = 100000;
    std::vector<double> draws(n);
    for (int i = 0; i < n; ++i)
        draws[static_cast<size_t>(i)] = diag_sample(p, rng.normal_tensor({1})).val()[0];
    McEstimate m = mc_mean(draws);
    CHECK(std::abs(m.estimate - 0.7) < 4.0 * m.std_error);
}

TEST_CASE("analytic KL values") {
    Tape t;
    DiagGaussian std1 = make_diag(t, {0.0}, {0.0});
    CHECK(kl_diag(std1, std1).val().item() == doctest::Approx(0.0).epsilon(1e-15));
    DiagGaussian mean1 = make_diag(t, {1.0}, {0.0});
    CHECK(kl_diag(mean1, std1).val().item() == doctest::Approx(0.5).epsilon(1e-12));
    DiagGaussian wide = make_diag(t, {0.0}, {std::log(2.0)});
    CHECK(kl_diag(wide, std1).val().item() ==
          doctest::Approx((4.0 - 1.0) / 2.0 - std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("kl_diag is nonnegative and zero iff equal") {
    Rng rng(31);
    Tape t;
    for (int i = 0; i < 50; ++i) {
        DiagGaussian p = make_diag(t, {rng.normal(), rng.normal()},
                                   {0.3 * rng.normal(), 0.3 * rng.normal()});
        DiagGaussian q = make_diag(t, {rng.normal(), rng.normal()},
                                   {0.3 * rng.normal(), 0.3 * rng.normal()});
        CHECK(kl_diag(p, q).val().item() >= 0.0);
        CHECK(kl_diag(p, p).val().item() == doctest::Approx(0.0).epsilon(1e-14));
    }
}

TEST_CASE("mixture log prob reduces to the component for K=1 and identical components") {
    Tape t;
    DiagGaussian c = make_diag(t, {0.3}, {-0.2});
    Value z = t.constant(tensor_from({0.9}));
    Mixture m1 = Mixture::make({c}, t.constant(Tensor::zeros({1})));
    CHECK(mixture_log_prob(z, m1).val().item() ==
          doctest::Approx(diag_log_prob(z, c).val().item()).epsilon(1e-14));
    Mixture m2 = Mixture::make({c, c}, t.constant(Tensor::zeros({2})));
    CHECK(mixture_log_prob(z, m2).val().item() ==
          doctest::Approx(diag_log_prob(z, c).val().item()).epsilon(1e-14));
}

TEST_CASE("two-component mixture matches quadrature-normalized oracle at probe points") {
    Tape t;
    DiagGaussian c1 = make_diag(t, {-1.0}, {0.0});
    DiagGaussian c2 = make_diag(t, {2.0}, {std::log(0.5)});
    Mixture m = Mixture::make({c1, c2}, t.constant(tensor_from({std::log(0.3), std::log(0.7)})));
    auto dens = [&](double x) {
        auto g = [](double v, double mu, double sd) {
            return std::exp(-0.5 * (v - mu) * (v - mu) / (sd * sd)) / (sd * std::sqrt(2 * M_PI));
        };
        return 0.3 * g(x, -1.0, 1.0) + 0.7 * g(x, 2.0, 0.5);
    };
    const double norm = quadrature(dens);
    for (double probe : {-2.0, -0.5, 0.0, 1.0, 2.5}) {
        Value lp = mixture_log_prob(t.constant(tensor_from({probe})), m);
        CHECK(lp.val().item() == doctest::Approx(std::log(dens(probe) / norm)).epsilon(1e-10));
    }
}

TEST_CASE("mixture_sample respects weights and degenerate cases") {
    Tape t;
    DiagGaussian c1 = make_diag(t, {0.0}, {0.0});
    DiagGaussian c2 = make_diag(t, {5.0}, {0.0});
    Rng rng(4242);

    Mixture only_first = Mixture::make({c1, c2}, t.constant(tensor_from({30.0, -30.0})));
    for (int i = 0; i < 20; ++i) CHECK(mixture_sample(only_first, rng).component == 0);

    Mixture m = Mixture::make({c1, c2}, t.constant(tensor_from({std::log(0.25), std::log(0.75)})));
    const int n = 100000;
    int count2 = 0;
    for (int i = 0; i < n; ++i)
        if (mixture_sample(m, rng).component == 1) ++count2;
    const double freq = static_cast<double>(count2) / n;
    const double se = std::sqrt(0.75 * 0.25 / n);
    CHECK(std::abs(freq - 0.75) < 4.0 * se);
}

TEST_CASE("mixture sampling keeps pathwise gradient only through the drawn component") {
    ParamMap params;
    params["m1"] = tensor_from({0.0});
    params["m2"] = tensor_from({5.0});
    EvalContext ctx(params);
    Tape& t = ctx.tape();
    DiagGaussian c1 = DiagGaussian::make(ctx.param("m1"), t.constant(tensor_from({0.0})));
    DiagGaussian c2 = DiagGaussian::make(ctx.param("m2"), t.constant(tensor_from({0.0})));
    Mixture m = Mixture::make({c1, c2}, t.constant(tensor_from({30.0, -30.0})));
    Rng rng(9);
    MixtureDraw d = mixture_sample(m, rng);
    REQUIRE(d.component == 0);
    NamedGrads g = ctx.backward(sum_all(d.z));
    CHECK(g.at("m1")[0] == 1.0);
    CHECK(g.at("m2")[0] == 0.0);
}

TEST_CASE("kl_monte_carlo agrees with the analytic value and quadrature") {
    Tape t;
    DiagGaussianT p{tensor_from({0.4}), tensor_from({std::log(0.8)})};
    DiagGaussianT q{tensor_from({-0.3}), tensor_from({0.0})};
    Rng rng(17);

    auto sampler = [&](Rng& r) { return diag_sample(p, r.normal_tensor({1})); };
    auto logp = [&](const Tensor& z) { return diag_log_prob(z, p); };
    auto logq = [&](const Tensor& z) { return diag_log_prob(z, q); };

    McEstimate same = kl_monte_carlo(sampler, logp, logp, 2000, rng);
    CHECK(std::abs(same.estimate) < 1e-12);

    McEstimate est = kl_monte_carlo(sampler, logp, logq, 10000, rng);
    const double analytic = kl_diag(p, q);
    CHECK(std::abs(est.estimate - analytic) < 4.0 * est.std_error);

    // Gaussian vs 2-component mixture against quadrature
    MixtureT mix;
    mix.components = {DiagGaussianT{tensor_from({-1.0}), tensor_from({0.0})},
                      DiagGaussianT{tensor_from({1.5}), tensor_from({std::log(0.6)})}};
    mix.log_weights = tensor_from({std::log(0.5), std::log(0.5)});
    auto logmix = [&](const Tensor& z) { return mixture_log_prob(z, mix); };
    McEstimate est2 = kl_monte_carlo(sampler, logp, logmix, 20000, rng);
    double quad_kl = quadrature([&](double x) {
        Tensor z = tensor_from({x});
        const double lp = diag_log_prob(z, p);
        return std::exp(lp) * (lp - mixture_log_prob(z, mix));
    });
    CHECK(std::abs(est2.estimate - quad_kl) < 4.0 * est2.std_error);
}

TEST_CASE("full gaussian log prob") {
    FullGaussian g1{tensor_from({0.0}), Tensor({1, 1}, {1.0})};
    CHECK(full_gaussian_log_prob(tensor_from({0.0}), g1) ==
          doctest::Approx(-0.5 * std::log(2 * M_PI)).epsilon(1e-12));

    // diagonal covariance matches the diagonal form
    FullGaussian g2{tensor_from({0.5, -0.5}), Tensor({2, 2}, {0.25, 0.0, 0.0, 4.0})};
    DiagGaussianT d2{tensor_from({0.5, -0.5}), tensor_from({std::log(0.5), std::log(2.0)})};
    Tensor x = tensor_from({1.0, 1.0});
    CHECK(full_gaussian_log_prob(x, g2) == doctest::Approx(diag_log_prob(x, d2)).epsilon(1e-12));

    CHECK_THROWS_AS((void)full_gaussian_log_prob(
                        tensor_from({0.0, 0.0}),
                        FullGaussian{tensor_from({0.0, 0.0}), Tensor({2, 2}, {1.0, 2.0, 2.0, 1.0})}),
                    NumericError);
}

TEST_CASE("full gaussian log-det via factorization matches eigenvalue product") {
    Rng rng(23);
    Tensor a = testutil::random_tensor(rng, {3, 3});
    Tensor cov = linalg::matmul_tn(a, a);
    for (int64_t i = 0; i < 3; ++i) cov.at(i, i) += 0.7;
    linalg::SymEig e = linalg::jacobi_eigen(cov);
    double logdet = 0.0;
    for (int64_t i = 0; i < 3; ++i) logdet += std::log(e.values[i]);
    FullGaussian g{Tensor::zeros({3}), cov};
    const double lp = full_gaussian_log_prob(Tensor::zeros({3}), g);
    CHECK(lp == doctest::Approx(-0.5 * (logdet + 3.0 * std::log(2 * M_PI))).epsilon(1e-10));
}

TEST_CASE("densities integrate to one (1-d quadrature)") {
    Tape t;
    DiagGaussian p = make_diag(t, {0.4}, {std::log(0.7)});
    double z1 = quadrature([&](double x) {
        return std::exp(diag_log_prob(t.constant(tensor_from({x})), p).val().item());
    });
    CHECK(z1 == doctest::Approx(1.0).epsilon(1e-6));

    Mixture m = Mixture::make({make_diag(t, {-2.0}, {0.0}), make_diag(t, {1.0}, {-0.5})},
                              t.constant(tensor_from({0.4, -0.1})));
    double z2 = quadrature([&](double x) {
        return std::exp(mixture_log_prob(t.constant(tensor_from({x})), m).val().item());
    });
    CHECK(z2 == doctest::Approx(1.0).epsilon(1e-6));

    FullGaussian g{tensor_from({0.3}), Tensor({1, 1}, {2.25})};
    double z3 = quadrature([&](double x) {
        return std::exp(full_gaussian_log_prob(tensor_from({x}), g));
    });
    CHECK(z3 == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("gradient of reparameterized sample mean w.r.t. mean is identity") {
    ParamMap params;
    params["mean"] = tensor_from({0.2, -0.4});
    params["log_std"] = tensor_from({0.1, 0.3});
    Rng rng(5);
    // average over draws; gradient of mean(z_i) w.r.t. mean parameter is one.
    NamedGrads total;
    const int n = 16;
    for (int i = 0; i < n; ++i) {
        EvalContext ctx(params);
        DiagGaussian p = DiagGaussian::make(ctx.param("mean"), ctx.param("log_std"));
        Value z = diag_sample(p, rng.normal_tensor({2}));
        NamedGrads g = ctx.backward(mean_all(z));
        if (i == 0) total = std::move(g);
        else
            for (auto& [k, v] : total)
                for (int64_t j = 0; j < v.numel(); ++j) v[j] += g.at(k)[j];
    }
    for (int64_t j = 0; j < 2; ++j)
        CHECK(total.at("mean")[j] / n == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("log std clamping keeps parameters in range") {
    Tape t;
    DiagGaussian p = DiagGaussian::make(t.constant(tensor_from({0.0})),
                                        t.constant(tensor_from({12.0})));
    CHECK(p.log_std.val()[0] == 7.0);
    DiagGaussian q = DiagGaussian::make(t.constant(tensor_from({0.0})),
                                        t.constant(tensor_from({-12.0})));
    CHECK(q.log_std.val()[0] == -7.0);
}
