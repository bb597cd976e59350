#include "mmvb/model.hpp"

#include <cmath>

#include "json.hpp"
#include "mmvb/kernels.hpp"

namespace mmvb {

namespace {

std::string dec_prefix(int s) { return "dec" + std::to_string(s); }

Value activation(Value v, Activation act) {
    return act == Activation::Relu ? relu(v) : leaky_relu(v, kLeakyReluSlope);
}

int64_t argmax(const Tensor& t) {
    int64_t best = 0;
    for (int64_t i = 1; i < t.numel(); ++i)
        if (t[i] > t[best]) best = i;
    return best;
}

}  // namespace

int64_t GenerativeModel::latent_dim() const {
    if (private_layout)
        return private_layout->shared_dim +
               static_cast<int64_t>(decoders.size()) * private_layout->private_dim;
    return prior.dim;
}

Value GenerativeModel::decoder_input(Value z, int s) const {
    if (!private_layout) return z;
    const int64_t dp = private_layout->private_dim;
    const int64_t ds = private_layout->shared_dim;
    Value shared = slice(z, 0, 0, ds);
    if (dp == 0) return shared;
    Value priv = slice(z, 0, ds + s * dp, dp);
    return concat({shared, priv}, 0);
}

Tensor glorot_uniform(int64_t fan_out, int64_t fan_in, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return rng.uniform_tensor({fan_out, fan_in}, -a, a);
}

void mlp_init(ParamMap& params, const std::string& prefix, int64_t in_dim,
              const std::vector<int64_t>& hidden, int64_t out_dim, Rng& rng) {
    int64_t prev = in_dim;
    int layer = 0;
    for (int64_t h : hidden) {
        params[prefix + ".w" + std::to_string(layer)] = glorot_uniform(h, prev, rng);
        params[prefix + ".b" + std::to_string(layer)] = Tensor::zeros({h});
        prev = h;
        ++layer;
    }
    params[prefix + ".w" + std::to_string(layer)] = glorot_uniform(out_dim, prev, rng);
    params[prefix + ".b" + std::to_string(layer)] = Tensor::zeros({out_dim});
}

Value mlp_forward(EvalContext& ctx, const std::string& prefix, Value in,
                  const std::vector<int64_t>& hidden, int64_t out_dim, Activation act) {
    (void)out_dim;
    Value h = in;
    int layer = 0;
    for (size_t i = 0; i < hidden.size(); ++i, ++layer) {
        Value w = ctx.param(prefix + ".w" + std::to_string(layer));
        Value b = ctx.param(prefix + ".b" + std::to_string(layer));
        h = activation(add(matvec(w, h), b), act);
    }
    Value w = ctx.param(prefix + ".w" + std::to_string(layer));
    Value b = ctx.param(prefix + ".b" + std::to_string(layer));
    return add(matvec(w, h), b);
}

void GenerativeModel::init_params(ParamMap& params, Rng& rng) const {
    if (prior.kind == PriorKind::GaussianMixture) {
        if (prior.components < 2) throw ConfigError("mixture prior needs K >= 2");
        for (int64_t c = 0; c < prior.components; ++c) {
            params["prior.mean." + std::to_string(c)] =
                rng.uniform_tensor({prior.dim}, -2.0, 2.0);
            params["prior.log_std." + std::to_string(c)] = Tensor::zeros({prior.dim});
        }
        params["prior.logits"] = Tensor::zeros({prior.components});
    }
    const int64_t dp = private_layout ? private_layout->private_dim : 0;
    const int64_t ds = private_layout ? private_layout->shared_dim : prior.dim;
    for (const DecoderSpec& d : decoders) {
        const int64_t in_dim = private_layout ? ds + dp : prior.dim;
        const std::string p = dec_prefix(d.modality);
        if (d.kind == DecoderKind::LinearGaussian) {
            mlp_init(params, p, in_dim, {}, d.out_dim, rng);
        } else {
            mlp_init(params, p, in_dim, d.hidden, d.out_dim, rng);
        }
        if (d.kind != DecoderKind::Categorical && d.scale_mode == ScaleMode::LearnedScalar)
            params[p + ".log_scale"] = Tensor::full({1}, d.fixed_log_scale);
    }
}

DiagGaussian standard_normal(Tape& tape, int64_t dim) {
    return DiagGaussian{tape.constant(Tensor::zeros({dim})), tape.constant(Tensor::zeros({dim}))};
}

Mixture prior_mixture(EvalContext& ctx, const GenerativeModel& m) {
    if (m.prior.kind != PriorKind::GaussianMixture)
        throw ConfigError("prior_mixture: model has a standard Gaussian prior");
    std::vector<DiagGaussian> comps;
    comps.reserve(static_cast<size_t>(m.prior.components));
    for (int64_t c = 0; c < m.prior.components; ++c) {
        comps.push_back(DiagGaussian::make(ctx.param("prior.mean." + std::to_string(c)),
                                           ctx.param("prior.log_std." + std::to_string(c))));
    }
    return Mixture::make(std::move(comps), ctx.param("prior.logits"));
}

Value prior_log_prob(EvalContext& ctx, const GenerativeModel& m, Value z) {
    if (z.val().numel() != m.latent_dim())
        throw ShapeError("prior_log_prob: latent dimension mismatch");
    if (m.prior.kind == PriorKind::StandardGaussian)
        return diag_log_prob(z, standard_normal(ctx.tape(), m.latent_dim()));
    return mixture_log_prob(z, prior_mixture(ctx, m));
}

Value decoder_forward(EvalContext& ctx, const GenerativeModel& m, int s, Value z) {
    const DecoderSpec& d = m.decoders[static_cast<size_t>(s)];
    Value in = m.decoder_input(z, s);
    const std::vector<int64_t> hidden =
        d.kind == DecoderKind::LinearGaussian ? std::vector<int64_t>{} : d.hidden;
    return mlp_forward(ctx, dec_prefix(s), in, hidden, d.out_dim, d.act);
}

Value decoder_log_scale(EvalContext& ctx, const GenerativeModel& m, int s) {
    const DecoderSpec& d = m.decoders[static_cast<size_t>(s)];
    if (d.kind == DecoderKind::Categorical)
        throw ConfigError("decoder_log_scale: categorical decoder has no scale");
    if (d.scale_mode == ScaleMode::LearnedScalar) return ctx.param(dec_prefix(s) + ".log_scale");
    return ctx.constant(Tensor::full({1}, d.fixed_log_scale));
}

Value decode_log_prob(EvalContext& ctx, const GenerativeModel& m, int s, const Tensor& x_s,
                      Value z) {
    const DecoderSpec& d = m.decoders[static_cast<size_t>(s)];
    if (x_s.numel() != d.out_dim)
        throw ShapeError("decode_log_prob: modality " + std::to_string(s) + " expects dim " +
                         std::to_string(d.out_dim) + ", got " + shape_str(x_s.shape()));
    Value out = decoder_forward(ctx, m, s, z);
    if (d.kind == DecoderKind::Categorical) {
        const int64_t cls = argmax(x_s);
        if (x_s[cls] <= 0.0)
            throw ConfigError("decode_log_prob: categorical observation is not one-hot");
        return index(log_softmax(out), cls);
    }
    // Gaussian with scalar log-scale broadcast over dimensions.
    Value xc = ctx.constant(x_s);
    Value diff = sub(xc, out);
    Value ls = decoder_log_scale(ctx, m, s);
    Value inv_var = exp_(scale(ls, -2.0));  // [1]
    Value quad = scale(mul(sum_all(mul(diff, diff)), sum_all(inv_var)), -0.5);
    const double dd = static_cast<double>(d.out_dim);
    Value logdet = scale(sum_all(ls), -dd);
    return add_scalar(add(quad, logdet), -0.5 * dd * kLn2Pi);
}

Tensor decode_sample(const GenerativeModel& m, const ParamMap& params, int s, const Tensor& z,
                     Rng& rng, bool deterministic) {
    const DecoderSpec& d = m.decoders[static_cast<size_t>(s)];
    EvalContext ctx(params);
    Value zc = ctx.constant(z);
    Value out = decoder_forward(ctx, m, s, zc);
    const Tensor& mean = out.val();
    if (d.kind == DecoderKind::Categorical) {
        Tensor probs(mean.shape());
        kernels::softmax_rows(mean.data(), probs.data(), 1, mean.numel());
        const int64_t cls = deterministic ? argmax(probs) : rng.categorical(probs.data(), probs.numel());
        Tensor onehot = Tensor::zeros({d.out_dim});
        onehot[cls] = 1.0;
        return onehot;
    }
    if (deterministic) return mean;
    const double sigma = std::exp(decoder_log_scale(ctx, m, s).val()[0]);
    Tensor x = mean;
    for (int64_t i = 0; i < x.numel(); ++i) x[i] += sigma * rng.normal();
    return x;
}

double decode_log_prob_plain(const GenerativeModel& m, const ParamMap& params, int s,
                             const Tensor& x_s, const Tensor& z) {
    EvalContext ctx(params);
    Value zc = ctx.constant(z);
    return decode_log_prob(ctx, m, s, x_s, zc).val().item();
}

Tensor decoder_mean_plain(const GenerativeModel& m, const ParamMap& params, int s,
                          const Tensor& z) {
    EvalContext ctx(params);
    return decoder_forward(ctx, m, s, ctx.constant(z)).val();
}

Value optimal_cluster_posterior(EvalContext& ctx, const GenerativeModel& m, Value z) {
    Mixture prior = prior_mixture(ctx, m);
    std::vector<Value> terms;
    for (int64_t c = 0; c < prior.k(); ++c) {
        terms.push_back(add(index(prior.log_weights, c),
                            diag_log_prob(z, prior.components[static_cast<size_t>(c)])));
    }
    return softmax(stack_scalars(terms));
}

Value cluster_factor_objective(EvalContext& ctx, const GenerativeModel& m, Value z, Value q,
                               double beta) {
    Mixture prior = prior_mixture(ctx, m);
    if (q.val().numel() != prior.k())
        throw ShapeError("cluster_factor_objective: factor length mismatch");
    std::vector<Value> joint;
    for (int64_t c = 0; c < prior.k(); ++c) {
        joint.push_back(add(index(prior.log_weights, c),
                            diag_log_prob(z, prior.components[static_cast<size_t>(c)])));
    }
    // sum_c q(c) [ beta log p(c, z) - beta log q(c) ]
    Value lp = stack_scalars(joint);
    Value lq = log_(q);
    return scale(sum_all(mul(q, sub(lp, lq))), beta);
}

std::string param_map_to_json(const ParamMap& params) {
    nlohmann::json j;
    for (const auto& [name, t] : params) {
        nlohmann::json entry;
        entry["shape"] = t.shape();
        entry["values"] = t.vec();
        j[name] = std::move(entry);
    }
    return j.dump(2);
}

ParamMap param_map_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ParamMap out;
    for (auto it = j.begin(); it != j.end(); ++it) {
        Shape shape = it.value().at("shape").get<Shape>();
        std::vector<double> values = it.value().at("values").get<std::vector<double>>();
        out.emplace(it.key(), Tensor(std::move(shape), std::move(values)));
    }
    return out;
}

}  // namespace mmvb
