#include "mmvb/distributions.hpp"

#include <cmath>

#include "mmvb/linalg.hpp"

namespace mmvb {

// --- differentiable forms ----------------------------------------------------

DiagGaussian DiagGaussian::make(Value mean, Value raw_log_std) {
    if (mean.val().numel() != raw_log_std.val().numel())
        throw ShapeError("diag gaussian: mean and log_std lengths differ");
    return DiagGaussian{mean, clamp(raw_log_std, kLogStdClampLo, kLogStdClampHi)};
}

DiagGaussian DiagGaussian::frozen() const {
    return DiagGaussian{stop_gradient(mean), stop_gradient(log_std)};
}

Mixture Mixture::make(std::vector<DiagGaussian> comps, Value raw_logits) {
    if (comps.empty()) throw ShapeError("mixture: needs K >= 1 components");
    if (raw_logits.val().numel() != static_cast<int64_t>(comps.size()))
        throw ShapeError("mixture: logits length does not match component count");
    return Mixture{std::move(comps), log_softmax(raw_logits)};
}

Mixture Mixture::frozen() const {
    Mixture out;
    out.components.reserve(components.size());
    for (const auto& c : components) out.components.push_back(c.frozen());
    out.log_weights = stop_gradient(log_weights);
    return out;
}

Value diag_log_prob(Value z, const DiagGaussian& p) {
    const int64_t d = p.dim();
    if (z.val().numel() != d) throw ShapeError("diag_log_prob: dimension mismatch");
    Value diff = sub(z, p.mean);
    Value inv_var = exp_(scale(p.log_std, -2.0));
    Value quad = sum_all(mul(mul(diff, diff), inv_var));
    Value term = scale(quad, -0.5);
    Value logdet = scale(sum_all(p.log_std), -1.0);
    return add_scalar(add(term, logdet), -0.5 * static_cast<double>(d) * kLn2Pi);
}

Value diag_sample(const DiagGaussian& p, const Tensor& noise) {
    if (noise.numel() != p.dim()) throw ShapeError("diag_sample: noise dimension mismatch");
    Value eps = p.mean.tape->constant(noise);
    return add(p.mean, mul(exp_(p.log_std), eps));
}

Value kl_diag(const DiagGaussian& p, const DiagGaussian& q) {
    if (p.dim() != q.dim()) throw ShapeError("kl_diag: dimension mismatch");
    Value dlog = sub(q.log_std, p.log_std);
    Value var_p = exp_(scale(p.log_std, 2.0));
    Value dm = sub(p.mean, q.mean);
    Value num = add(var_p, mul(dm, dm));
    Value inv_2var_q = scale(exp_(scale(q.log_std, -2.0)), 0.5);
    Value per = add_scalar(add(dlog, mul(num, inv_2var_q)), -0.5);
    return sum_all(per);
}

Value mixture_log_prob(Value z, const Mixture& m) {
    std::vector<Value> comp_lp;
    comp_lp.reserve(m.components.size());
    for (const auto& c : m.components) comp_lp.push_back(diag_log_prob(z, c));
    return logsumexp(add(stack_scalars(comp_lp), m.log_weights));
}

MixtureDraw mixture_sample(const Mixture& m, Rng& rng) {
    const int64_t k = m.k();
    std::vector<double> w(static_cast<size_t>(k));
    for (int64_t i = 0; i < k; ++i) w[static_cast<size_t>(i)] = std::exp(m.log_weights.val()[i]);
    const int64_t comp = k == 1 ? 0 : rng.categorical(w.data(), k);
    Tensor noise = rng.normal_tensor({m.dim()});
    return MixtureDraw{diag_sample(m.components[static_cast<size_t>(comp)], noise), comp};
}

// --- plain forms -------------------------------------------------------------

double diag_log_prob(const Tensor& z, const DiagGaussianT& p) {
    const int64_t d = p.mean.numel();
    if (z.numel() != d || p.log_std.numel() != d)
        throw ShapeError("diag_log_prob: dimension mismatch");
    double quad = 0.0, logdet = 0.0;
    for (int64_t i = 0; i < d; ++i) {
        const double diff = z[i] - p.mean[i];
        quad += diff * diff * std::exp(-2.0 * p.log_std[i]);
        logdet += p.log_std[i];
    }
    return -0.5 * quad - logdet - 0.5 * static_cast<double>(d) * kLn2Pi;
}

Tensor diag_sample(const DiagGaussianT& p, const Tensor& noise) {
    Tensor z = p.mean;
    for (int64_t i = 0; i < z.numel(); ++i) z[i] += std::exp(p.log_std[i]) * noise[i];
    return z;
}

double kl_diag(const DiagGaussianT& p, const DiagGaussianT& q) {
    const int64_t d = p.mean.numel();
    if (q.mean.numel() != d) throw ShapeError("kl_diag: dimension mismatch");
    double acc = 0.0;
    for (int64_t i = 0; i < d; ++i) {
        const double var_p = std::exp(2.0 * p.log_std[i]);
        const double var_q = std::exp(2.0 * q.log_std[i]);
        const double dm = p.mean[i] - q.mean[i];
        acc += q.log_std[i] - p.log_std[i] + (var_p + dm * dm) / (2.0 * var_q) - 0.5;
    }
    return acc;
}

double mixture_log_prob(const Tensor& z, const MixtureT& m) {
    const int64_t k = static_cast<int64_t>(m.components.size());
    double mx = -1e300;
    std::vector<double> terms(static_cast<size_t>(k));
    for (int64_t i = 0; i < k; ++i) {
        terms[static_cast<size_t>(i)] =
            m.log_weights[i] + diag_log_prob(z, m.components[static_cast<size_t>(i)]);
        mx = std::max(mx, terms[static_cast<size_t>(i)]);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - mx);
    return mx + std::log(acc);
}

double full_gaussian_log_prob(const Tensor& x, const FullGaussian& g) {
    const int64_t d = g.mean.numel();
    if (x.numel() != d) throw ShapeError("full_gaussian_log_prob: dimension mismatch");
    Tensor l = linalg::cholesky(g.covariance);
    Tensor diff({d});
    for (int64_t i = 0; i < d; ++i) diff[i] = x[i] - g.mean[i];
    Tensor sol = linalg::cholesky_solve(l, diff);
    const double quad = linalg::dot(diff, sol);
    return -0.5 * (quad + linalg::cholesky_logdet(l) + static_cast<double>(d) * kLn2Pi);
}

double full_gaussian_entropy(const FullGaussian& g) {
    Tensor l = linalg::cholesky(g.covariance);
    const double d = static_cast<double>(g.mean.numel());
    return 0.5 * (d * (1.0 + kLn2Pi) + linalg::cholesky_logdet(l));
}

Tensor full_gaussian_sample(const FullGaussian& g, Rng& rng) {
    const int64_t d = g.mean.numel();
    Tensor l = linalg::cholesky(g.covariance);
    Tensor eps = rng.normal_tensor({d});
    Tensor x = g.mean;
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = 0; j <= i; ++j) x[i] += l.at(i, j) * eps[j];
    return x;
}

McEstimate kl_monte_carlo(const std::function<Tensor(Rng&)>& p_sampler,
                          const std::function<double(const Tensor&)>& p_log_prob,
                          const std::function<double(const Tensor&)>& q_log_prob, int n, Rng& rng) {
    if (n < 1) throw ConfigError("kl_monte_carlo: n must be >= 1");
    std::vector<double> w(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Tensor z = p_sampler(rng);
        w[static_cast<size_t>(i)] = p_log_prob(z) - q_log_prob(z);
    }
    return mc_mean(w);
}

McEstimate mc_mean(const std::vector<double>& samples) {
    const double n = static_cast<double>(samples.size());
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= n;
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var = samples.size() > 1 ? var / (n - 1.0) : 0.0;
    return McEstimate{mean, std::sqrt(var / n)};
}

}  // namespace mmvb
