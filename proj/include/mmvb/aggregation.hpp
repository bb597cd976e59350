#pragma once

#include <utility>
#include <variant>
#include <vector>

#include "mmvb/distributions.hpp"
#include "mmvb/model.hpp"
#include "mmvb/tape.hpp"

namespace mmvb {

/// Subset S of the M modalities, with complement semantics.
struct MaskSubset {
    int M = 0;
    std::vector<uint8_t> bits;

    static MaskSubset empty(int M) { return MaskSubset{M, std::vector<uint8_t>(static_cast<size_t>(M), 0)}; }
    static MaskSubset full(int M) { return MaskSubset{M, std::vector<uint8_t>(static_cast<size_t>(M), 1)}; }
    static MaskSubset of(int M, const std::vector<int>& members);

    MaskSubset complement() const;
    MaskSubset intersect(const MaskSubset& o) const;
    bool contains(int s) const { return bits[static_cast<size_t>(s)] != 0; }
    int count() const;
    bool none() const { return count() == 0; }
    bool all() const { return count() == M; }
    std::vector<int> indices() const;  // ascending
    bool operator==(const MaskSubset& o) const { return M == o.M && bits == o.bits; }
    std::string str() const;
};

enum class Scheme { Poe, Moe, Mopoe, SumPooling, SelfAttention };

std::string scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

struct EncoderConfig {
    Scheme scheme = Scheme::SumPooling;
    int M = 0;
    std::vector<int64_t> modality_dims;
    int64_t latent_dim = 0;  // D (total for invariant schemes, shared for private ones)

    int64_t feature_dim = 32;  // D_E; forced to 2*latent for PoE/MoE/MoPoE
    std::vector<int64_t> encoder_hidden = {64};
    std::vector<int64_t> inner_hidden = {64};  // chi
    std::vector<int64_t> outer_hidden = {64};  // rho
    int64_t attn_width = 32;
    int64_t attn_heads = 4;
    int64_t attn_layers = 2;
    int64_t mixture_components = 1;  // K of the PI mixture head
    Activation act = Activation::Relu;

    bool private_latents = false;
    int64_t shared_dim = 0;
    int64_t private_dim = 0;

    int64_t effective_feature_dim() const;
};

/// Per-modality features keyed by slot; permuting the list order never
/// changes results because aggregation iterates slots in ascending order.
using FeatureList = std::vector<std::pair<int, Value>>;

struct PrivateBundle {
    DiagGaussian shared;
    std::vector<DiagGaussian> privates;     // size M
    std::vector<uint8_t> prior_fallback;    // size M; 1 where params equal the prior
};

struct EncoderOutput {
    std::variant<DiagGaussian, Mixture> dist;

    bool is_mixture() const { return std::holds_alternative<Mixture>(dist); }
    const DiagGaussian& gaussian() const { return std::get<DiagGaussian>(dist); }
    const Mixture& mixture() const { return std::get<Mixture>(dist); }

    Value log_prob(Value z) const;
    EncoderOutput frozen() const;
};

struct DrawResult {
    Value z;
    int64_t component = -1;
};
DrawResult draw(const EncoderOutput& out, Rng& rng);

// Plain snapshot of an encoder output, for MC evaluation loops.
struct EncOutT {
    bool mixture = false;
    DiagGaussianT g;
    MixtureT mix;

    double log_prob(const Tensor& z) const;
    Tensor sample(Rng& rng) const;
    int64_t dim() const { return mixture ? mix.components.front().mean.numel() : g.mean.numel(); }
};
EncOutT to_plain(const EncoderOutput& out);

// --- fixed aggregation schemes ----------------------------------------------

/// Features are (mu_s, log sigma_s) pairs of length 2D. The prior enters as
/// one expert; the empty subset returns the prior unchanged.
DiagGaussian aggregate_poe(const FeatureList& features, const MaskSubset& mask,
                           const DiagGaussian& prior);
Mixture aggregate_moe(const FeatureList& features, const MaskSubset& mask);
/// Uniform mixture of PoE aggregates over every subset of the mask
/// (2^|S| components, ascending binary order).
Mixture aggregate_mopoe(const FeatureList& features, const MaskSubset& mask,
                        const DiagGaussian& prior);

// --- learnable aggregation schemes ------------------------------------------

EncoderOutput aggregate_sum_pooling(EvalContext& ctx, const EncoderConfig& cfg,
                                    const FeatureList& features, const MaskSubset& mask);
EncoderOutput aggregate_self_attention(EvalContext& ctx, const EncoderConfig& cfg,
                                       const FeatureList& features, const MaskSubset& mask);

/// Permutation-equivariant private-latent aggregation at a given shared
/// sample z'. Absent modalities get standard-normal prior fallbacks.
std::pair<std::vector<DiagGaussian>, std::vector<uint8_t>> aggregate_equivariant(
    EvalContext& ctx, const EncoderConfig& cfg, Value z_shared, const FeatureList& features,
    const MaskSubset& mask);

// --- encoder object -----------------------------------------------------------

class EncoderBase {
  public:
    virtual ~EncoderBase() = default;
    virtual EncoderOutput encode(EvalContext& ctx, const std::vector<Tensor>& x,
                                 const MaskSubset& mask) const = 0;
    virtual bool supports_private() const { return false; }
    virtual DiagGaussian encode_shared(EvalContext& ctx, const std::vector<Tensor>& x,
                                       const MaskSubset& mask) const;
    virtual std::pair<std::vector<DiagGaussian>, std::vector<uint8_t>> encode_privates_at(
        EvalContext& ctx, const std::vector<Tensor>& x, const MaskSubset& mask,
        Value z_shared) const;
};

class LearnedEncoder : public EncoderBase {
  public:
    LearnedEncoder(EncoderConfig cfg, const GenerativeModel* model);

    void init_params(ParamMap& params, Rng& rng) const;

    Value encode_modality(EvalContext& ctx, int s, const Tensor& x_s) const;
    FeatureList encode_features(EvalContext& ctx, const std::vector<Tensor>& x,
                                const MaskSubset& mask) const;

    EncoderOutput encode(EvalContext& ctx, const std::vector<Tensor>& x,
                         const MaskSubset& mask) const override;
    bool supports_private() const override { return cfg_.private_latents; }
    DiagGaussian encode_shared(EvalContext& ctx, const std::vector<Tensor>& x,
                               const MaskSubset& mask) const override;
    std::pair<std::vector<DiagGaussian>, std::vector<uint8_t>> encode_privates_at(
        EvalContext& ctx, const std::vector<Tensor>& x, const MaskSubset& mask,
        Value z_shared) const override;

    const EncoderConfig& config() const { return cfg_; }

  private:
    EncoderOutput prior_output(EvalContext& ctx) const;
    EncoderConfig cfg_;
    const GenerativeModel* model_;
};

}  // namespace mmvb
