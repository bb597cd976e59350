#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmvb/aggregation.hpp"
#include "mmvb/model.hpp"

namespace mmvb {

enum class BoundKind { Masked, Mixture, Tc, MaskedAugmented };
enum class MaskSamplerKind { Hierarchical, FixedSubset, UniformSingletons };

std::string bound_name(BoundKind k);
BoundKind bound_from_name(const std::string& name);

struct ObjectiveConfig {
    BoundKind bound = BoundKind::Masked;
    double beta = 1.0;
    MaskSamplerKind sampler = MaskSamplerKind::Hierarchical;
    std::vector<int> fixed_subset;  // for FixedSubset
    int mc_samples = 1;
    bool private_latents = false;
    bool stl = true;
    // Test instrumentation: additionally freezes the conditional-prior terms
    // q(z|x_S) so the returned gradient is the pure sampling-path component.
    bool freeze_conditional_prior = false;

    void validate() const;
};

/// Each bit i.i.d. Bernoulli(gamma).
MaskSubset bernoulli_mask(Rng& rng, int M, double gamma);
/// gamma ~ U(0,1), then each bit Bernoulli(gamma); P(S = empty) = 1/(M+1).
MaskSubset sample_mask(Rng& rng, int M);
MaskSubset sample_mask(const ObjectiveConfig& cfg, Rng& rng, const MaskSubset& observed);

/// Per-term Monte Carlo estimates for one objective evaluation;
/// total == reconstruction - beta * rate holds exactly.
struct BoundEstimate {
    double total = 0.0;
    double reconstruction = 0.0;
    double rate = 0.0;
    double std_error = 0.0;
    MaskSubset subset;
    std::vector<double> per_modality_recon;
};

BoundEstimate marginal_bound(const GenerativeModel& model, const ParamMap& params,
                             const EncoderBase& enc, const std::vector<Tensor>& x,
                             const MaskSubset& mask, double beta, Rng& rng, int n);
BoundEstimate conditional_bound(const GenerativeModel& model, const ParamMap& params,
                                const EncoderBase& enc, const std::vector<Tensor>& x,
                                const MaskSubset& mask, double beta, Rng& rng, int n);
BoundEstimate mixture_bound(const GenerativeModel& model, const ParamMap& params,
                            const EncoderBase& enc, const std::vector<Tensor>& x,
                            const MaskSubset& mask, double beta, Rng& rng, int n);
BoundEstimate tc_bound(const GenerativeModel& model, const ParamMap& params,
                       const EncoderBase& enc, const std::vector<Tensor>& x,
                       const MaskSubset& mask, double beta, Rng& rng, int n);

struct StepResult {
    double loss = 0.0;
    NamedGrads grads;
    MaskSubset subset;
    std::map<std::string, double> terms;
};

/// Single-sample estimate of -(L_S + L_{\S}) with sticking-the-landing
/// freezing of the sampled densities' parameter copies; gradients w.r.t.
/// every parameter. `observed` restricts all sets to the observed modalities.
StepResult masked_objective_step(const GenerativeModel& model, const ParamMap& params,
                                 const EncoderBase& enc, const std::vector<Tensor>& x,
                                 const ObjectiveConfig& cfg, Rng& rng,
                                 const MaskSubset* observed = nullptr);
StepResult mixture_objective_step(const GenerativeModel& model, const ParamMap& params,
                                  const EncoderBase& enc, const std::vector<Tensor>& x,
                                  const ObjectiveConfig& cfg, Rng& rng,
                                  const MaskSubset* observed = nullptr);
StepResult tc_objective_step(const GenerativeModel& model, const ParamMap& params,
                             const EncoderBase& enc, const std::vector<Tensor>& x,
                             const ObjectiveConfig& cfg, Rng& rng,
                             const MaskSubset* observed = nullptr);
/// Masked objective over a private/shared latent split, including the
/// projection of private blocks and prior fallbacks for absent modalities.
StepResult private_objective_step(const GenerativeModel& model, const ParamMap& params,
                                  const EncoderBase& enc, const std::vector<Tensor>& x,
                                  const ObjectiveConfig& cfg, Rng& rng,
                                  const MaskSubset* observed = nullptr);
/// Masked objective under a mixture prior; the optimal cluster factor
/// collapses every beta log p(z) term onto the mixture-prior density.
StepResult augmented_objective_step(const GenerativeModel& model, const ParamMap& params,
                                    const EncoderBase& enc, const std::vector<Tensor>& x,
                                    const ObjectiveConfig& cfg, Rng& rng,
                                    const MaskSubset* observed = nullptr);

/// Dispatch on cfg.bound / cfg.private_latents.
StepResult objective_step(const GenerativeModel& model, const ParamMap& params,
                          const EncoderBase& enc, const std::vector<Tensor>& x,
                          const ObjectiveConfig& cfg, Rng& rng,
                          const MaskSubset* observed = nullptr);

// --- optimizer -----------------------------------------------------------------

struct ScheduleConfig {
    double lr_start = 5e-4;
    double lr_end = 1e-4;
    int64_t total_steps = 1;
};

double cosine_lr(const ScheduleConfig& s, int64_t step);

struct TrainState {
    ParamMap params;
    ParamMap m;  // first moments
    ParamMap v;  // second moments
    int64_t step = 0;
    ScheduleConfig schedule;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static TrainState init(ParamMap params, ScheduleConfig schedule);
};

/// Adam with bias correction and the cosine schedule; grads must be keyed
/// identically to the parameters.
void optimizer_step(TrainState& state, const NamedGrads& grads);

}  // namespace mmvb
