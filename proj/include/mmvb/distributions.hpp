#pragma once

#include <functional>
#include <vector>

#include "mmvb/rng.hpp"
#include "mmvb/tape.hpp"
#include "mmvb/tensor.hpp"

namespace mmvb {

inline constexpr double kLogStdClampLo = -7.0;
inline constexpr double kLogStdClampHi = 7.0;
inline constexpr double kLn2Pi = 1.8378770664093454836;

// --- differentiable (tape) forms --------------------------------------------

/// Diagonal Gaussian with log-std clamped to [-7, 7] at construction,
/// which bounds the precisions entering PoE sums.
struct DiagGaussian {
    Value mean;
    Value log_std;

    static DiagGaussian make(Value mean, Value raw_log_std);
    DiagGaussian frozen() const;  // stop-gradient on both parameter blocks
    int64_t dim() const { return mean.val().numel(); }
};

struct Mixture {
    std::vector<DiagGaussian> components;
    Value log_weights;  // normalized so logsumexp(log_weights) == 0

    static Mixture make(std::vector<DiagGaussian> comps, Value raw_logits);
    Mixture frozen() const;
    int64_t dim() const { return components.front().dim(); }
    int64_t k() const { return static_cast<int64_t>(components.size()); }
};

Value diag_log_prob(Value z, const DiagGaussian& p);
/// Reparameterized draw z = mean + exp(log_std) * noise; noise is supplied
/// externally so the randomness stays outside the graph.
Value diag_sample(const DiagGaussian& p, const Tensor& noise);
Value kl_diag(const DiagGaussian& p, const DiagGaussian& q);

Value mixture_log_prob(Value z, const Mixture& m);

struct MixtureDraw {
    Value z;
    int64_t component;
};
/// Component drawn from the (stop-gradiented) weights; the pathwise gradient
/// flows only through the drawn component's parameters.
MixtureDraw mixture_sample(const Mixture& m, Rng& rng);

// --- plain forms (oracle/evaluation paths) ----------------------------------

struct DiagGaussianT {
    Tensor mean;
    Tensor log_std;
};

double diag_log_prob(const Tensor& z, const DiagGaussianT& p);
Tensor diag_sample(const DiagGaussianT& p, const Tensor& noise);
double kl_diag(const DiagGaussianT& p, const DiagGaussianT& q);

struct MixtureT {
    std::vector<DiagGaussianT> components;
    Tensor log_weights;
};

double mixture_log_prob(const Tensor& z, const MixtureT& m);

/// Full-covariance Gaussian; only used on analytic/oracle paths.
struct FullGaussian {
    Tensor mean;        // [D]
    Tensor covariance;  // [D, D], SPD
};

double full_gaussian_log_prob(const Tensor& x, const FullGaussian& g);
double full_gaussian_entropy(const FullGaussian& g);
Tensor full_gaussian_sample(const FullGaussian& g, Rng& rng);

struct McEstimate {
    double estimate;
    double std_error;
};

/// E_p[log p - log q] by Monte Carlo with externally supplied callbacks.
McEstimate kl_monte_carlo(const std::function<Tensor(Rng&)>& p_sampler,
                          const std::function<double(const Tensor&)>& p_log_prob,
                          const std::function<double(const Tensor&)>& q_log_prob, int n, Rng& rng);

McEstimate mc_mean(const std::vector<double>& samples);

}  // namespace mmvb
