#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mmvb/distributions.hpp"
#include "mmvb/tape.hpp"

namespace mmvb {

enum class PriorKind { StandardGaussian, GaussianMixture };
enum class DecoderKind { LinearGaussian, MlpGaussian, Categorical };
enum class Activation { Relu, LeakyRelu };
enum class ScaleMode { Fixed, LearnedScalar };

inline constexpr double kLeakyReluSlope = 0.2;

struct PriorSpec {
    PriorKind kind = PriorKind::StandardGaussian;
    int64_t dim = 0;
    int64_t components = 0;  // K >= 2 for mixture priors
};

struct DecoderSpec {
    int modality = 0;
    DecoderKind kind = DecoderKind::LinearGaussian;
    int64_t out_dim = 0;                 // modality dimension, or class count
    std::vector<int64_t> hidden = {64, 64};  // ignored for linear decoders
    Activation act = Activation::Relu;
    ScaleMode scale_mode = ScaleMode::Fixed;
    double fixed_log_scale = 0.0;
};

/// Private/shared latent split; decoder s reads only (z', z~_s), enforced by
/// slicing the latent vector.
struct PrivateLayout {
    int64_t shared_dim = 0;
    int64_t private_dim = 0;
};

struct GenerativeModel {
    PriorSpec prior;
    std::vector<DecoderSpec> decoders;
    std::optional<PrivateLayout> private_layout;

    int modality_count() const { return static_cast<int>(decoders.size()); }
    int64_t latent_dim() const;
    /// Slice of the latent vector visible to decoder s.
    Value decoder_input(Value z, int s) const;

    void init_params(ParamMap& params, Rng& rng) const;
};

/// Uniform Glorot init shared by decoders and encoders.
Tensor glorot_uniform(int64_t fan_out, int64_t fan_in, Rng& rng);

Value mlp_forward(EvalContext& ctx, const std::string& prefix, Value in,
                  const std::vector<int64_t>& hidden, int64_t out_dim, Activation act);
void mlp_init(ParamMap& params, const std::string& prefix, int64_t in_dim,
              const std::vector<int64_t>& hidden, int64_t out_dim, Rng& rng);

// --- prior -------------------------------------------------------------------

Value prior_log_prob(EvalContext& ctx, const GenerativeModel& m, Value z);
/// Mixture prior parameters bound to the tape; errors for standard priors.
Mixture prior_mixture(EvalContext& ctx, const GenerativeModel& m);
/// Standard-normal parameters of matching dimension, as constants.
DiagGaussian standard_normal(Tape& tape, int64_t dim);

// --- decoders ------------------------------------------------------------------

/// Mean (gaussian) or logits (categorical) for decoder s at latent z.
Value decoder_forward(EvalContext& ctx, const GenerativeModel& m, int s, Value z);
Value decoder_log_scale(EvalContext& ctx, const GenerativeModel& m, int s);
/// log p(x_s | z); categorical x_s is a one-hot vector.
Value decode_log_prob(EvalContext& ctx, const GenerativeModel& m, int s, const Tensor& x_s, Value z);
/// Draw (or deterministic mean/argmax) from the decoding distribution.
Tensor decode_sample(const GenerativeModel& m, const ParamMap& params, int s, const Tensor& z,
                     Rng& rng, bool deterministic);
/// Plain log p(x_s | z) for evaluation loops (runs the decoder forward on a
/// throwaway tape).
double decode_log_prob_plain(const GenerativeModel& m, const ParamMap& params, int s,
                             const Tensor& x_s, const Tensor& z);
Tensor decoder_mean_plain(const GenerativeModel& m, const ParamMap& params, int s,
                          const Tensor& z);

// --- mixture-prior cluster factor ---------------------------------------------

/// Optimal variational factor over the cluster indicator: softmax of
/// log p(c) + log p(z|c). Errors for standard priors.
Value optimal_cluster_posterior(EvalContext& ctx, const GenerativeModel& m, Value z);
/// Entropy-regularized cluster objective at factor q (probabilities, [K]);
/// maximized by the optimal posterior, where it equals beta * log p(z).
Value cluster_factor_objective(EvalContext& ctx, const GenerativeModel& m, Value z, Value q,
                               double beta);

// --- serialization ---------------------------------------------------------------

std::string param_map_to_json(const ParamMap& params);
ParamMap param_map_from_json(const std::string& text);

}  // namespace mmvb
