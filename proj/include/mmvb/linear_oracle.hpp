#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mmvb/aggregation.hpp"
#include "mmvb/distributions.hpp"
#include "mmvb/linalg.hpp"
#include "mmvb/rng.hpp"

namespace mmvb {

/// Ground-truth linear-Gaussian model: z ~ N(0, I_D), x_s | z ~ N(W_s z + b_s, sigma^2 I).
struct LinearGaussianModel {
    int64_t latent_dim = 0;
    std::vector<Tensor> loadings;  // W_s, [D_s x D]
    std::vector<Tensor> biases;    // b_s, [D_s]
    double sigma = 1.0;
    std::optional<PrivateLayout> private_layout;  // block-sparse loadings when set

    int modality_count() const { return static_cast<int>(loadings.size()); }
    int64_t modality_dim(int s) const { return loadings[static_cast<size_t>(s)].dim(0); }
    int64_t total_dim() const;

    /// Rows of the stacked loading/bias restricted to the subset.
    Tensor stacked_loading(const MaskSubset& mask) const;
    Tensor stacked_bias(const MaskSubset& mask) const;
    Tensor stacked_x(const std::vector<Tensor>& x, const MaskSubset& mask) const;
};

struct LinearModelConfig {
    int M = 2;
    int64_t latent_dim = 5;
    std::vector<int64_t> modality_dims;  // defaults to latent_dim + 3 each when empty
    double sigma = 1.0;
    bool private_blocks = false;
    int64_t shared_dim = 0;   // used when private_blocks
    int64_t private_dim = 0;  // used when private_blocks
};

/// Orthonormal-column loadings from a QR factorization of uniform(-1,1)
/// entries; biases standard normal. Private variant makes [W'_s, W~_s]
/// jointly orthonormal with zero blocks elsewhere.
LinearGaussianModel generate_model(Rng& rng, const LinearModelConfig& cfg);

struct Dataset {
    std::vector<std::vector<Tensor>> x;  // [N][M]
    std::vector<Tensor> latents;         // [N], true z
    std::vector<MaskSubset> observed;    // [N], MCAR masks (full when eta = 0)
    std::vector<int64_t> labels;         // optional per-sample class labels
    int M = 0;
    std::vector<int64_t> modality_dims;
    std::vector<bool> categorical;  // per modality

    size_t size() const { return x.size(); }
};

Dataset sample_dataset(const LinearGaussianModel& model, int64_t n, Rng& rng, double eta);

/// Adjusted posterior p~_beta(z | x_S) = N(K_S^-1 W_S^T (x_S - b_S), sigma_beta^2 K_S^-1),
/// K_S = W_S^T W_S + sigma_beta^2 I, sigma_beta = sigma * sqrt(beta).
/// The empty subset returns the prior.
FullGaussian exact_posterior(const LinearGaussianModel& model, const std::vector<Tensor>& x,
                             const MaskSubset& mask, double beta);

/// log N(x_S; b_S, W_S W_S^T + sigma_beta^2 I); zero for the empty subset.
double exact_marginal_llh(const LinearGaussianModel& model, const std::vector<Tensor>& x,
                          const MaskSubset& mask, double beta);

/// log p(x) - log p(x_S); zero when S is the full set.
double exact_conditional_llh(const LinearGaussianModel& model, const std::vector<Tensor>& x,
                             const MaskSubset& mask);

/// Analytic entropies of the data law (beta = 1): H(X_S) and H(X_{\S} | X_S).
double marginal_entropy(const LinearGaussianModel& model, const MaskSubset& mask);
double conditional_entropy(const LinearGaussianModel& model, const MaskSubset& mask);

struct MleFit {
    Tensor loading;       // stacked W_ML
    Tensor bias;          // stacked b_ML
    double sigma2 = 0.0;  // sigma^2_ML
    double llh = 0.0;     // mean per-sample log-likelihood of the fit on the data
    LinearGaussianModel as_model(const Dataset& data) const;
};

/// Probabilistic-PCA maximum likelihood via a cyclic-Jacobi eigendecomposition
/// of the stacked sample covariance.
MleFit mle_fit(const Dataset& data, int64_t latent_dim);

double mean_exact_llh(const LinearGaussianModel& model, const Dataset& data,
                      const MaskSubset& mask, double beta);

/// Drop-in encoder that returns the exact adjusted posterior, converted to
/// diagonal parameters (exact when loadings have orthonormal columns).
class AnalyticEncoder : public EncoderBase {
  public:
    AnalyticEncoder(const LinearGaussianModel& model, double beta, double log_std_inflate = 0.0);
    EncoderOutput encode(EvalContext& ctx, const std::vector<Tensor>& x,
                         const MaskSubset& mask) const override;
    DiagGaussianT encode_plain(const std::vector<Tensor>& x, const MaskSubset& mask) const;

  private:
    const LinearGaussianModel* model_;
    double beta_;
    double log_std_inflate_;
};

/// Parameters and config for a PoE encoder with linear per-modality experts
/// that reproduces the adjusted posterior exactly for every subset. Used to
/// probe gradient estimators at the variational optimum.
std::pair<EncoderConfig, ParamMap> posterior_poe_encoder(const LinearGaussianModel& model,
                                                         double beta);

/// Generative-model view of the oracle (linear decoders, fixed scales).
GenerativeModel as_generative_model(const LinearGaussianModel& model);
ParamMap true_decoder_params(const LinearGaussianModel& model);

}  // namespace mmvb
