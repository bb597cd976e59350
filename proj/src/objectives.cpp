#include "mmvb/objectives.hpp"

#include <cmath>

namespace mmvb {

std::string bound_name(BoundKind k) {
    switch (k) {
        case BoundKind::Masked: return "masked";
        case BoundKind::Mixture: return "mixture";
        case BoundKind::Tc: return "tc";
        case BoundKind::MaskedAugmented: return "masked_augmented";
    }
    return "?";
}

BoundKind bound_from_name(const std::string& name) {
    if (name == "masked") return BoundKind::Masked;
    if (name == "mixture") return BoundKind::Mixture;
    if (name == "tc") return BoundKind::Tc;
    if (name == "masked_augmented") return BoundKind::MaskedAugmented;
    throw ConfigError("unknown bound kind: " + name);
}

void ObjectiveConfig::validate() const {
    if (beta <= 0.0) throw ConfigError("objective: beta must be positive");
    if (bound == BoundKind::Tc && sampler != MaskSamplerKind::UniformSingletons)
        throw ConfigError("objective: the tc bound requires the uniform-singletons sampler");
    if (mc_samples < 1) throw ConfigError("objective: mc_samples must be >= 1");
}

MaskSubset bernoulli_mask(Rng& rng, int M, double gamma) {
    MaskSubset m = MaskSubset::empty(M);
    for (int s = 0; s < M; ++s) m.bits[static_cast<size_t>(s)] = rng.uniform() < gamma ? 1 : 0;
    return m;
}

MaskSubset sample_mask(Rng& rng, int M) {
    const double gamma = rng.uniform();
    return bernoulli_mask(rng, M, gamma);
}

MaskSubset sample_mask(const ObjectiveConfig& cfg, Rng& rng, const MaskSubset& observed) {
    switch (cfg.sampler) {
        case MaskSamplerKind::Hierarchical:
            return sample_mask(rng, observed.M).intersect(observed);
        case MaskSamplerKind::FixedSubset:
            return MaskSubset::of(observed.M, cfg.fixed_subset).intersect(observed);
        case MaskSamplerKind::UniformSingletons: {
            auto idx = observed.indices();
            if (idx.empty()) return MaskSubset::empty(observed.M);
            const int pick =
                idx[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(idx.size())))];
            return MaskSubset::of(observed.M, {pick});
        }
    }
    throw ConfigError("unknown mask sampler");
}

// --- plain bound estimators -----------------------------------------------------

namespace {

struct PlainPrior {
    bool mixture = false;
    MixtureT mix;
    int64_t dim = 0;

    double log_prob(const Tensor& z) const {
        if (mixture) return mixture_log_prob(z, mix);
        double quad = 0.0;
        for (int64_t i = 0; i < z.numel(); ++i) quad += z[i] * z[i];
        return -0.5 * quad - 0.5 * static_cast<double>(z.numel()) * kLn2Pi;
    }
};

PlainPrior plain_prior(const GenerativeModel& model, const ParamMap& params) {
    PlainPrior p;
    p.dim = model.latent_dim();
    if (model.prior.kind != PriorKind::GaussianMixture) return p;
    p.mixture = true;
    EvalContext ctx(params);
    Mixture m = prior_mixture(ctx, model);
    p.mix.log_weights = m.log_weights.val();
    for (const auto& c : m.components)
        p.mix.components.push_back(DiagGaussianT{c.mean.val(), c.log_std.val()});
    return p;
}

EncOutT plain_encode(const EncoderBase& enc, const ParamMap& params, const std::vector<Tensor>& x,
                     const MaskSubset& mask) {
    EvalContext ctx(params);
    return to_plain(enc.encode(ctx, x, mask));
}

BoundEstimate assemble(const MaskSubset& mask, int M, const std::vector<double>& recon,
                       const std::vector<double>& rate,
                       const std::vector<std::vector<double>>& per_mod, double beta) {
    BoundEstimate e;
    e.subset = mask;
    McEstimate r = mc_mean(recon);
    McEstimate k = mc_mean(rate);
    e.reconstruction = r.estimate;
    e.rate = k.estimate;
    e.total = e.reconstruction - beta * e.rate;
    std::vector<double> totals(recon.size());
    for (size_t i = 0; i < recon.size(); ++i) totals[i] = recon[i] - beta * rate[i];
    e.std_error = mc_mean(totals).std_error;
    e.per_modality_recon.assign(static_cast<size_t>(M), 0.0);
    for (const auto& pm : per_mod)
        for (int s = 0; s < M; ++s)
            e.per_modality_recon[static_cast<size_t>(s)] += pm[static_cast<size_t>(s)];
    for (int s = 0; s < M; ++s)
        e.per_modality_recon[static_cast<size_t>(s)] /= static_cast<double>(per_mod.size());
    return e;
}

}  // namespace

BoundEstimate marginal_bound(const GenerativeModel& model, const ParamMap& params,
                             const EncoderBase& enc, const std::vector<Tensor>& x,
                             const MaskSubset& mask, double beta, Rng& rng, int n) {
    const int M = model.modality_count();
    if (mask.none()) {
        BoundEstimate e;
        e.subset = mask;
        e.per_modality_recon.assign(static_cast<size_t>(M), 0.0);
        return e;
    }
    EncOutT q = plain_encode(enc, params, x, mask);
    PlainPrior prior = plain_prior(model, params);
    const bool analytic = !q.mixture && !prior.mixture;
    const double kl = analytic ? kl_diag(q.g, DiagGaussianT{Tensor::zeros({q.dim()}),
                                                            Tensor::zeros({q.dim()})})
                               : 0.0;
    std::vector<double> recon(static_cast<size_t>(n)), rate(static_cast<size_t>(n));
    std::vector<std::vector<double>> per_mod(static_cast<size_t>(n),
                                             std::vector<double>(static_cast<size_t>(M), 0.0));
    for (int i = 0; i < n; ++i) {
        Tensor z = q.sample(rng);
        double rec = 0.0;
        for (int s : mask.indices()) {
            const double lp = decode_log_prob_plain(model, params, s, x[static_cast<size_t>(s)], z);
            per_mod[static_cast<size_t>(i)][static_cast<size_t>(s)] = lp;
            rec += lp;
        }
        recon[static_cast<size_t>(i)] = rec;
        rate[static_cast<size_t>(i)] = analytic ? kl : q.log_prob(z) - prior.log_prob(z);
    }
    return assemble(mask, M, recon, rate, per_mod, beta);
}

BoundEstimate conditional_bound(const GenerativeModel& model, const ParamMap& params,
                                const EncoderBase& enc, const std::vector<Tensor>& x,
                                const MaskSubset& mask, double beta, Rng& rng, int n) {
    const int M = model.modality_count();
    MaskSubset full = MaskSubset::full(M);
    MaskSubset comp = mask.complement();
    EncOutT q_full = plain_encode(enc, params, x, full);
    EncOutT q_sub = plain_encode(enc, params, x, mask);
    const bool analytic = !q_full.mixture && !q_sub.mixture;
    const double kl = analytic ? kl_diag(q_full.g, q_sub.g) : 0.0;
    std::vector<double> recon(static_cast<size_t>(n)), rate(static_cast<size_t>(n));
    std::vector<std::vector<double>> per_mod(static_cast<size_t>(n),
                                             std::vector<double>(static_cast<size_t>(M), 0.0));
    for (int i = 0; i < n; ++i) {
        Tensor z = q_full.sample(rng);
        double rec = 0.0;
        for (int s : comp.indices()) {
            const double lp = decode_log_prob_plain(model, params, s, x[static_cast<size_t>(s)], z);
            per_mod[static_cast<size_t>(i)][static_cast<size_t>(s)] = lp;
            rec += lp;
        }
        recon[static_cast<size_t>(i)] = rec;
        rate[static_cast<size_t>(i)] = analytic ? kl : q_full.log_prob(z) - q_sub.log_prob(z);
    }
    return assemble(mask, M, recon, rate, per_mod, beta);
}

BoundEstimate mixture_bound(const GenerativeModel& model, const ParamMap& params,
                            const EncoderBase& enc, const std::vector<Tensor>& x,
                            const MaskSubset& mask, double beta, Rng& rng, int n) {
    const int M = model.modality_count();
    EncOutT q = plain_encode(enc, params, x, mask);  // prior fallback on empty subsets
    PlainPrior prior = plain_prior(model, params);
    const bool analytic = !q.mixture && !prior.mixture;
    const double kl = analytic ? kl_diag(q.g, DiagGaussianT{Tensor::zeros({q.dim()}),
                                                            Tensor::zeros({q.dim()})})
                               : 0.0;
    std::vector<double> recon(static_cast<size_t>(n)), rate(static_cast<size_t>(n));
    std::vector<std::vector<double>> per_mod(static_cast<size_t>(n),
                                             std::vector<double>(static_cast<size_t>(M), 0.0));
    for (int i = 0; i < n; ++i) {
        Tensor z = q.sample(rng);
        double rec = 0.0;
        for (int s = 0; s < M; ++s) {
            const double lp = decode_log_prob_plain(model, params, s, x[static_cast<size_t>(s)], z);
            per_mod[static_cast<size_t>(i)][static_cast<size_t>(s)] = lp;
            rec += lp;
        }
        recon[static_cast<size_t>(i)] = rec;
        rate[static_cast<size_t>(i)] = analytic ? kl : q.log_prob(z) - prior.log_prob(z);
    }
    return assemble(mask, M, recon, rate, per_mod, beta);
}

BoundEstimate tc_bound(const GenerativeModel& model, const ParamMap& params,
                       const EncoderBase& enc, const std::vector<Tensor>& x,
                       const MaskSubset& mask, double beta, Rng& rng, int n) {
    const int M = model.modality_count();
    MaskSubset full = MaskSubset::full(M);
    EncOutT q_full = plain_encode(enc, params, x, full);
    EncOutT q_sub = plain_encode(enc, params, x, mask);
    const bool analytic = !q_full.mixture && !q_sub.mixture;
    const double kl = analytic ? kl_diag(q_full.g, q_sub.g) : 0.0;
    std::vector<double> recon(static_cast<size_t>(n)), rate(static_cast<size_t>(n));
    std::vector<std::vector<double>> per_mod(static_cast<size_t>(n),
                                             std::vector<double>(static_cast<size_t>(M), 0.0));
    for (int i = 0; i < n; ++i) {
        Tensor z = q_full.sample(rng);
        double rec = 0.0;
        for (int s = 0; s < M; ++s) {
            const double lp = decode_log_prob_plain(model, params, s, x[static_cast<size_t>(s)], z);
            per_mod[static_cast<size_t>(i)][static_cast<size_t>(s)] = lp;
            rec += lp;
        }
        recon[static_cast<size_t>(i)] = rec;
        rate[static_cast<size_t>(i)] = analytic ? kl : q_full.log_prob(z) - q_sub.log_prob(z);
    }
    return assemble(mask, M, recon, rate, per_mod, beta);
}

// --- objective steps ---------------------------------------------------------------

namespace {

Value zero_scalar(EvalContext& ctx) { return ctx.constant(Tensor::scalar(0.0)); }

Value recon_sum(EvalContext& ctx, const GenerativeModel& model, const std::vector<Tensor>& x,
                const MaskSubset& over, Value z) {
    Value acc = zero_scalar(ctx);
    for (int s : over.indices())
        acc = add(acc, decode_log_prob(ctx, model, s, x[static_cast<size_t>(s)], z));
    return acc;
}

StepResult finish(EvalContext& ctx, const MaskSubset& subset, Value loss,
                  std::map<std::string, double> terms) {
    StepResult r;
    r.loss = loss.val().item();
    r.subset = subset;
    r.terms = std::move(terms);
    r.grads = ctx.backward(loss);
    return r;
}

MaskSubset complement_within(const MaskSubset& observed, const MaskSubset& subset) {
    MaskSubset comp = observed;
    for (int s = 0; s < observed.M; ++s)
        comp.bits[static_cast<size_t>(s)] =
            (observed.contains(s) && !subset.contains(s)) ? 1 : 0;
    return comp;
}

}  // namespace

StepResult masked_objective_step(const GenerativeModel& model, const ParamMap& params,
                                 const EncoderBase& enc, const std::vector<Tensor>& x,
                                 const ObjectiveConfig& cfg, Rng& rng,
                                 const MaskSubset* observed) {
    const int M = model.modality_count();
    const MaskSubset obs = observed ? *observed : MaskSubset::full(M);
    const MaskSubset subset = sample_mask(cfg, rng, obs);
    const double beta = cfg.beta;

    EvalContext ctx(params);
    EncoderOutput out_s = enc.encode(ctx, x, subset);
    EncoderOutput out_o = enc.encode(ctx, x, obs);
    DrawResult z_s = draw(out_s, rng);
    DrawResult z_o = draw(out_o, rng);

    // marginal part on the subset
    Value recon_s = recon_sum(ctx, model, x, subset, z_s.z);
    Value lp_prior = prior_log_prob(ctx, model, z_s.z);
    Value lq_s = (cfg.stl ? out_s.frozen() : out_s).log_prob(z_s.z);
    Value l_marg = add(recon_s, scale(sub(lp_prior, lq_s), beta));

    // conditional part on the complement within the observed set
    MaskSubset comp = complement_within(obs, subset);
    Value recon_c = recon_sum(ctx, model, x, comp, z_o.z);
    Value lq_cond = (cfg.freeze_conditional_prior ? out_s.frozen() : out_s).log_prob(z_o.z);
    Value lq_o = (cfg.stl ? out_o.frozen() : out_o).log_prob(z_o.z);
    Value l_cond = add(recon_c, scale(sub(lq_cond, lq_o), beta));

    Value loss = scale(add(l_marg, l_cond), -1.0);
    std::map<std::string, double> terms{
        {"recon_marginal", recon_s.val().item()},
        {"rate_marginal", lq_s.val().item() - lp_prior.val().item()},
        {"recon_conditional", recon_c.val().item()},
        {"rate_conditional", lq_o.val().item() - lq_cond.val().item()},
    };
    return finish(ctx, subset, loss, std::move(terms));
}

StepResult mixture_objective_step(const GenerativeModel& model, const ParamMap& params,
                                  const EncoderBase& enc, const std::vector<Tensor>& x,
                                  const ObjectiveConfig& cfg, Rng& rng,
                                  const MaskSubset* observed) {
    const int M = model.modality_count();
    const MaskSubset obs = observed ? *observed : MaskSubset::full(M);
    const MaskSubset subset = sample_mask(cfg, rng, obs);
    const double beta = cfg.beta;

    EvalContext ctx(params);
    EncoderOutput out_s = enc.encode(ctx, x, subset);
    DrawResult z_s = draw(out_s, rng);
    Value recon = recon_sum(ctx, model, x, obs, z_s.z);
    Value lp_prior = prior_log_prob(ctx, model, z_s.z);
    Value lq_s = (cfg.stl ? out_s.frozen() : out_s).log_prob(z_s.z);
    Value bound = add(recon, scale(sub(lp_prior, lq_s), beta));
    Value loss = scale(bound, -1.0);
    std::map<std::string, double> terms{
        {"recon", recon.val().item()},
        {"rate", lq_s.val().item() - lp_prior.val().item()},
    };
    return finish(ctx, subset, loss, std::move(terms));
}

StepResult tc_objective_step(const GenerativeModel& model, const ParamMap& params,
                             const EncoderBase& enc, const std::vector<Tensor>& x,
                             const ObjectiveConfig& cfg, Rng& rng, const MaskSubset* observed) {
    const int M = model.modality_count();
    const MaskSubset obs = observed ? *observed : MaskSubset::full(M);
    const MaskSubset subset = sample_mask(cfg, rng, obs);
    const double beta = cfg.beta;

    EvalContext ctx(params);
    EncoderOutput out_s = enc.encode(ctx, x, subset);
    EncoderOutput out_o = enc.encode(ctx, x, obs);
    DrawResult z_o = draw(out_o, rng);
    Value recon = recon_sum(ctx, model, x, obs, z_o.z);
    Value lq_cond = (cfg.freeze_conditional_prior ? out_s.frozen() : out_s).log_prob(z_o.z);
    Value lq_o = (cfg.stl ? out_o.frozen() : out_o).log_prob(z_o.z);
    Value bound = add(recon, scale(sub(lq_cond, lq_o), beta));
    Value loss = scale(bound, -1.0);
    std::map<std::string, double> terms{
        {"recon", recon.val().item()},
        {"rate", lq_o.val().item() - lq_cond.val().item()},
    };
    return finish(ctx, subset, loss, std::move(terms));
}

StepResult private_objective_step(const GenerativeModel& model, const ParamMap& params,
                                  const EncoderBase& enc, const std::vector<Tensor>& x,
                                  const ObjectiveConfig& cfg, Rng& rng,
                                  const MaskSubset* observed) {
    if (!model.private_layout)
        throw ConfigError("private_objective_step: model lacks a private layout");
    if (!enc.supports_private())
        throw ConfigError("private_objective_step: encoder lacks private latents");
    const int M = model.modality_count();
    const int64_t dsh = model.private_layout->shared_dim;
    const int64_t dp = model.private_layout->private_dim;
    const MaskSubset obs = observed ? *observed : MaskSubset::full(M);
    const MaskSubset subset = sample_mask(cfg, rng, obs);
    const double beta = cfg.beta;

    EvalContext ctx(params);
    auto freeze = [&](const DiagGaussian& g) { return cfg.stl ? g.frozen() : g; };
    auto freeze_cond = [&](const DiagGaussian& g) {
        return cfg.freeze_conditional_prior ? g.frozen() : g;
    };
    DiagGaussian std_priv = standard_normal(ctx.tape(), dp);

    // subset branch: z'_S and private blocks for s in S
    DiagGaussian shared_s = enc.encode_shared(ctx, x, subset);
    Value zp_s = diag_sample(shared_s, rng.normal_tensor({dsh}));
    auto [priv_s, fb_s] = enc.encode_privates_at(ctx, x, subset, zp_s);
    std::vector<Value> parts_s{zp_s};
    for (int s = 0; s < M; ++s) {
        if (subset.contains(s))
            parts_s.push_back(diag_sample(priv_s[static_cast<size_t>(s)], rng.normal_tensor({dp})));
        else
            parts_s.push_back(ctx.constant(Tensor::zeros({dp})));
    }
    Value z_full_s = concat(parts_s, 0);

    Value recon_s = recon_sum(ctx, model, x, subset, z_full_s);
    Value lp_shared = diag_log_prob(zp_s, standard_normal(ctx.tape(), dsh));
    Value lq_shared = diag_log_prob(zp_s, freeze(shared_s));
    Value kl_terms = sub(lp_shared, lq_shared);
    for (int s : subset.indices()) {
        Value zb = parts_s[static_cast<size_t>(s) + 1];
        Value lp_b = diag_log_prob(zb, std_priv);  // prior fallback p(z~_s | z') = N(0, I)
        Value lq_b = diag_log_prob(zb, freeze(priv_s[static_cast<size_t>(s)]));
        kl_terms = add(kl_terms, sub(lp_b, lq_b));
    }
    Value l_marg = add(recon_s, scale(kl_terms, beta));

    // full branch: z'_O and all observed private blocks
    DiagGaussian shared_o = enc.encode_shared(ctx, x, obs);
    Value zp_o = diag_sample(shared_o, rng.normal_tensor({dsh}));
    auto [priv_o, fb_o] = enc.encode_privates_at(ctx, x, obs, zp_o);
    // subset-conditioned private densities evaluated at the full-branch z'
    auto [priv_s_at_o, fb_s_at_o] = enc.encode_privates_at(ctx, x, subset, zp_o);
    std::vector<Value> parts_o{zp_o};
    for (int s = 0; s < M; ++s) {
        if (obs.contains(s))
            parts_o.push_back(diag_sample(priv_o[static_cast<size_t>(s)], rng.normal_tensor({dp})));
        else
            parts_o.push_back(ctx.constant(Tensor::zeros({dp})));
    }
    Value z_full_o = concat(parts_o, 0);

    MaskSubset comp = complement_within(obs, subset);
    Value recon_c = recon_sum(ctx, model, x, comp, z_full_o);
    Value lq_cond_shared = diag_log_prob(zp_o, freeze_cond(shared_s));
    Value lq_full_shared = diag_log_prob(zp_o, freeze(shared_o));
    Value ckl = sub(lq_cond_shared, lq_full_shared);
    for (int s : obs.indices()) {
        Value zb = parts_o[static_cast<size_t>(s) + 1];
        Value lq_full_b = diag_log_prob(zb, freeze(priv_o[static_cast<size_t>(s)]));
        Value lq_cond_b =
            subset.contains(s)
                ? diag_log_prob(zb, freeze_cond(priv_s_at_o[static_cast<size_t>(s)]))
                : diag_log_prob(zb, std_priv);  // prior fallback for the complement
        ckl = add(ckl, sub(lq_cond_b, lq_full_b));
    }
    Value l_cond = add(recon_c, scale(ckl, beta));

    Value loss = scale(add(l_marg, l_cond), -1.0);
    std::map<std::string, double> terms{
        {"recon_marginal", recon_s.val().item()},
        {"rate_marginal", -kl_terms.val().item()},
        {"recon_conditional", recon_c.val().item()},
        {"rate_conditional", -ckl.val().item()},
    };
    return finish(ctx, subset, loss, std::move(terms));
}

StepResult augmented_objective_step(const GenerativeModel& model, const ParamMap& params,
                                    const EncoderBase& enc, const std::vector<Tensor>& x,
                                    const ObjectiveConfig& cfg, Rng& rng,
                                    const MaskSubset* observed) {
    if (model.prior.kind != PriorKind::GaussianMixture)
        throw ConfigError("augmented_objective_step: model prior is not a mixture");
    // The optimal cluster factor collapses the augmented bound onto the masked
    // objective with the mixture-prior marginal density in every prior term.
    return masked_objective_step(model, params, enc, x, cfg, rng, observed);
}

StepResult objective_step(const GenerativeModel& model, const ParamMap& params,
                          const EncoderBase& enc, const std::vector<Tensor>& x,
                          const ObjectiveConfig& cfg, Rng& rng, const MaskSubset* observed) {
    cfg.validate();
    if (cfg.private_latents) {
        if (cfg.bound != BoundKind::Masked)
            throw ConfigError("objective_step: private latents support the masked bound only");
        return private_objective_step(model, params, enc, x, cfg, rng, observed);
    }
    switch (cfg.bound) {
        case BoundKind::Masked:
            return masked_objective_step(model, params, enc, x, cfg, rng, observed);
        case BoundKind::Mixture:
            return mixture_objective_step(model, params, enc, x, cfg, rng, observed);
        case BoundKind::Tc: return tc_objective_step(model, params, enc, x, cfg, rng, observed);
        case BoundKind::MaskedAugmented:
            return augmented_objective_step(model, params, enc, x, cfg, rng, observed);
    }
    throw ConfigError("objective_step: unknown bound");
}

// --- optimizer --------------------------------------------------------------------

double cosine_lr(const ScheduleConfig& s, int64_t step) {
    if (s.total_steps <= 0) return s.lr_end;
    const double t =
        static_cast<double>(std::min(step, s.total_steps)) / static_cast<double>(s.total_steps);
    return s.lr_end + 0.5 * (s.lr_start - s.lr_end) * (1.0 + std::cos(M_PI * t));
}

TrainState TrainState::init(ParamMap params, ScheduleConfig schedule) {
    TrainState st;
    st.schedule = schedule;
    for (const auto& [name, t] : params) {
        st.m.emplace(name, Tensor::zeros(t.shape()));
        st.v.emplace(name, Tensor::zeros(t.shape()));
    }
    st.params = std::move(params);
    return st;
}

void optimizer_step(TrainState& state, const NamedGrads& grads) {
    if (grads.size() != state.params.size())
        throw ConfigError("optimizer_step: gradient keys do not match parameters");
    const double lr = cosine_lr(state.schedule, state.step);
    const double t = static_cast<double>(state.step + 1);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    auto git = grads.begin();
    for (auto& [name, p] : state.params) {
        if (git == grads.end() || git->first != name)
            throw ConfigError("optimizer_step: missing gradient for parameter " + name);
        const Tensor& g = git->second;
        Tensor& m = state.m.at(name);
        Tensor& v = state.v.at(name);
        for (int64_t i = 0; i < p.numel(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
        ++git;
    }
    ++state.step;
}

}  // namespace mmvb
