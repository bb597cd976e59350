#include "mmvb/aggregation.hpp"

#include <algorithm>
#include <cmath>

namespace mmvb {

// --- MaskSubset ---------------------------------------------------------------

MaskSubset MaskSubset::of(int M, const std::vector<int>& members) {
    MaskSubset m = MaskSubset::empty(M);
    for (int s : members) {
        if (s < 0 || s >= M) throw ConfigError("mask: modality index out of range");
        m.bits[static_cast<size_t>(s)] = 1;
    }
    return m;
}

MaskSubset MaskSubset::complement() const {
    MaskSubset c = *this;
    for (auto& b : c.bits) b = b ? 0 : 1;
    return c;
}

MaskSubset MaskSubset::intersect(const MaskSubset& o) const {
    if (o.M != M) throw ConfigError("mask: modality counts differ");
    MaskSubset c = *this;
    for (size_t i = 0; i < bits.size(); ++i) c.bits[i] = (bits[i] && o.bits[i]) ? 1 : 0;
    return c;
}

int MaskSubset::count() const {
    int n = 0;
    for (uint8_t b : bits) n += b ? 1 : 0;
    return n;
}

std::vector<int> MaskSubset::indices() const {
    std::vector<int> out;
    for (int s = 0; s < M; ++s)
        if (bits[static_cast<size_t>(s)]) out.push_back(s);
    return out;
}

std::string MaskSubset::str() const {
    std::string s = "{";
    bool first = true;
    for (int i : indices()) {
        if (!first) s += ",";
        s += std::to_string(i);
        first = false;
    }
    return s + "}";
}

std::string scheme_name(Scheme s) {
    switch (s) {
        case Scheme::Poe: return "poe";
        case Scheme::Moe: return "moe";
        case Scheme::Mopoe: return "mopoe";
        case Scheme::SumPooling: return "sum_pooling";
        case Scheme::SelfAttention: return "self_attention";
    }
    return "?";
}

Scheme scheme_from_name(const std::string& name) {
    if (name == "poe") return Scheme::Poe;
    if (name == "moe") return Scheme::Moe;
    if (name == "mopoe") return Scheme::Mopoe;
    if (name == "sum_pooling") return Scheme::SumPooling;
    if (name == "self_attention") return Scheme::SelfAttention;
    throw ConfigError("unknown aggregation scheme: " + name);
}

int64_t EncoderConfig::effective_feature_dim() const {
    const bool fixed = scheme == Scheme::Poe || scheme == Scheme::Moe || scheme == Scheme::Mopoe;
    if (!fixed) return feature_dim;
    if (private_latents) return 2 * shared_dim;  // invariant part of a PoE encoder
    return 2 * latent_dim;
}

// --- EncoderOutput -------------------------------------------------------------

Value EncoderOutput::log_prob(Value z) const {
    if (is_mixture()) return mixture_log_prob(z, mixture());
    return diag_log_prob(z, gaussian());
}

EncoderOutput EncoderOutput::frozen() const {
    if (is_mixture()) return EncoderOutput{mixture().frozen()};
    return EncoderOutput{gaussian().frozen()};
}

DrawResult draw(const EncoderOutput& out, Rng& rng) {
    if (out.is_mixture()) {
        MixtureDraw d = mixture_sample(out.mixture(), rng);
        return DrawResult{d.z, d.component};
    }
    const DiagGaussian& g = out.gaussian();
    Tensor noise = rng.normal_tensor({g.dim()});
    return DrawResult{diag_sample(g, noise), -1};
}

EncOutT to_plain(const EncoderOutput& out) {
    EncOutT p;
    if (out.is_mixture()) {
        p.mixture = true;
        const Mixture& m = out.mixture();
        p.mix.log_weights = m.log_weights.val();
        for (const auto& c : m.components)
            p.mix.components.push_back(DiagGaussianT{c.mean.val(), c.log_std.val()});
    } else {
        p.g = DiagGaussianT{out.gaussian().mean.val(), out.gaussian().log_std.val()};
    }
    return p;
}

double EncOutT::log_prob(const Tensor& z) const {
    return mixture ? mixture_log_prob(z, mix) : diag_log_prob(z, g);
}

Tensor EncOutT::sample(Rng& rng) const {
    if (!mixture) return diag_sample(g, rng.normal_tensor({g.mean.numel()}));
    const int64_t k = static_cast<int64_t>(mix.components.size());
    std::vector<double> w(static_cast<size_t>(k));
    for (int64_t i = 0; i < k; ++i) w[static_cast<size_t>(i)] = std::exp(mix.log_weights[i]);
    const int64_t comp = rng.categorical(w.data(), k);
    const DiagGaussianT& c = mix.components[static_cast<size_t>(comp)];
    return diag_sample(c, rng.normal_tensor({c.mean.numel()}));
}

// --- helpers -------------------------------------------------------------------

namespace {

// Present features in ascending slot order; the list order never matters.
std::vector<std::pair<int, Value>> present_sorted(const FeatureList& features,
                                                  const MaskSubset& mask) {
    std::vector<std::pair<int, Value>> out;
    for (const auto& [s, v] : features)
        if (mask.contains(s)) out.emplace_back(s, v);
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

DiagGaussian feature_as_gaussian(Value h) {
    const int64_t d2 = h.val().numel();
    if (d2 % 2 != 0) throw ShapeError("expert feature length must be even (mu, log sigma)");
    const int64_t d = d2 / 2;
    return DiagGaussian::make(slice(h, 0, 0, d), slice(h, 0, d, d));
}

Value activation_of(Value v, Activation act) {
    return act == Activation::Relu ? relu(v) : leaky_relu(v, kLeakyReluSlope);
}

// Row-wise MLP on an [r, c] matrix; weights stored [out, in] as for vectors.
Value mlp_rows(EvalContext& ctx, const std::string& prefix, Value x,
               const std::vector<int64_t>& hidden, Activation act) {
    Value h = x;
    int layer = 0;
    const int64_t r = x.val().dim(0);
    for (size_t i = 0; i < hidden.size(); ++i, ++layer) {
        Value w = ctx.param(prefix + ".w" + std::to_string(layer));
        Value b = ctx.param(prefix + ".b" + std::to_string(layer));
        h = activation_of(add(matmul(h, transpose(w)), broadcast_rows(b, r)), act);
    }
    Value w = ctx.param(prefix + ".w" + std::to_string(layer));
    Value b = ctx.param(prefix + ".b" + std::to_string(layer));
    return add(matmul(h, transpose(w)), broadcast_rows(b, r));
}

int64_t head_dim(const EncoderConfig& cfg) {
    const int64_t d = cfg.private_latents ? cfg.shared_dim : cfg.latent_dim;
    return cfg.mixture_components <= 1 ? 2 * d
                                       : 2 * d * cfg.mixture_components + cfg.mixture_components;
}

EncoderOutput parse_head(const EncoderConfig& cfg, Value out) {
    const int64_t d = cfg.private_latents ? cfg.shared_dim : cfg.latent_dim;
    const int64_t k = cfg.mixture_components;
    if (out.val().numel() != head_dim(cfg)) throw ShapeError("aggregation head: bad output size");
    if (k <= 1) return EncoderOutput{feature_as_gaussian(out)};
    std::vector<DiagGaussian> comps;
    comps.reserve(static_cast<size_t>(k));
    for (int64_t c = 0; c < k; ++c) {
        Value mean = slice(out, 0, 2 * d * c, d);
        Value ls = slice(out, 0, 2 * d * c + d, d);
        comps.push_back(DiagGaussian::make(mean, ls));
    }
    Value logits = slice(out, 0, 2 * d * k, k);
    return EncoderOutput{Mixture::make(std::move(comps), logits)};
}

// Masked pre-layer-norm transformer stack over [M, W] token rows. Masked rows
// enter as zeros and are re-zeroed after every residual update; masked keys
// are excluded inside the softmax, so present rows never read absent ones.
Value attention_blocks(EvalContext& ctx, const EncoderConfig& cfg, const std::string& prefix,
                       Value tokens, const MaskSubset& mask) {
    const int64_t w = cfg.attn_width;
    const int64_t heads = cfg.attn_heads;
    if (w % heads != 0) throw ConfigError("attention width must be divisible by head count");
    const int64_t dh = w / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    const int64_t rows = tokens.val().dim(0);

    Value g = tokens;
    for (int64_t l = 0; l < cfg.attn_layers; ++l) {
        const std::string lp = prefix + ".l" + std::to_string(l);
        Value ln1 = layer_norm(g, ctx.param(lp + ".ln1.gain"), ctx.param(lp + ".ln1.shift"));
        std::vector<Value> head_outs;
        head_outs.reserve(static_cast<size_t>(heads));
        for (int64_t h = 0; h < heads; ++h) {
            const std::string hp = lp + ".h" + std::to_string(h);
            Value q = matmul(ln1, ctx.param(hp + ".wq"));
            Value k = matmul(ln1, ctx.param(hp + ".wk"));
            Value v = matmul(ln1, ctx.param(hp + ".wv"));
            Value scores = scale(matmul(q, transpose(k)), inv_sqrt_dh);
            Value attn = masked_softmax(scores, mask.bits);
            head_outs.push_back(matmul(attn, v));
        }
        Value merged = matmul(concat(head_outs, 1), ctx.param(lp + ".wo"));
        merged = add(merged, broadcast_rows(ctx.param(lp + ".bo"), rows));
        Value z = add(g, mask_rows(merged, mask.bits));
        Value ln2 = layer_norm(z, ctx.param(lp + ".ln2.gain"), ctx.param(lp + ".ln2.shift"));
        Value ff = mlp_rows(ctx, lp + ".ff", ln2, {w}, cfg.act);
        g = add(z, mask_rows(ff, mask.bits));
    }
    return g;
}

void attention_init(ParamMap& params, const EncoderConfig& cfg, const std::string& prefix,
                    Rng& rng) {
    const int64_t w = cfg.attn_width;
    const int64_t dh = w / cfg.attn_heads;
    const double a = std::sqrt(6.0 / static_cast<double>(w + dh));
    const double ao = std::sqrt(6.0 / static_cast<double>(w + w));
    for (int64_t l = 0; l < cfg.attn_layers; ++l) {
        const std::string lp = prefix + ".l" + std::to_string(l);
        params[lp + ".ln1.gain"] = Tensor::full({w}, 1.0);
        params[lp + ".ln1.shift"] = Tensor::zeros({w});
        for (int64_t h = 0; h < cfg.attn_heads; ++h) {
            const std::string hp = lp + ".h" + std::to_string(h);
            params[hp + ".wq"] = rng.uniform_tensor({w, dh}, -a, a);
            params[hp + ".wk"] = rng.uniform_tensor({w, dh}, -a, a);
            params[hp + ".wv"] = rng.uniform_tensor({w, dh}, -a, a);
        }
        params[lp + ".wo"] = rng.uniform_tensor({w, w}, -ao, ao);
        params[lp + ".bo"] = Tensor::zeros({w});
        params[lp + ".ln2.gain"] = Tensor::full({w}, 1.0);
        params[lp + ".ln2.shift"] = Tensor::zeros({w});
        mlp_init(params, lp + ".ff", w, {w}, w, rng);
    }
}

}  // namespace

// --- fixed schemes ---------------------------------------------------------------

DiagGaussian aggregate_poe(const FeatureList& features, const MaskSubset& mask,
                           const DiagGaussian& prior) {
    auto present = present_sorted(features, mask);
    if (present.empty()) return prior;

    Value prec = exp_(scale(prior.log_std, -2.0));
    Value weighted = mul(prec, prior.mean);
    for (const auto& [s, h] : present) {
        DiagGaussian expert = feature_as_gaussian(h);
        Value p_s = exp_(scale(expert.log_std, -2.0));
        prec = add(prec, p_s);
        weighted = add(weighted, mul(p_s, expert.mean));
    }
    Value mean = divide(weighted, prec);
    Value log_std = scale(log_(prec), -0.5);
    return DiagGaussian::make(mean, log_std);
}

Mixture aggregate_moe(const FeatureList& features, const MaskSubset& mask) {
    auto present = present_sorted(features, mask);
    if (present.empty()) throw ConfigError("aggregate_moe: undefined for the empty subset");
    std::vector<DiagGaussian> comps;
    comps.reserve(present.size());
    Tape* tape = present[0].second.tape;
    for (const auto& [s, h] : present) comps.push_back(feature_as_gaussian(h));
    Value logits = tape->constant(Tensor::zeros({static_cast<int64_t>(comps.size())}));
    return Mixture::make(std::move(comps), logits);
}

Mixture aggregate_mopoe(const FeatureList& features, const MaskSubset& mask,
                        const DiagGaussian& prior) {
    auto present = present_sorted(features, mask);
    const int n = static_cast<int>(present.size());
    if (n > 12)
        throw ConfigError("aggregate_mopoe: 2^" + std::to_string(n) +
                          " components; use a learnable aggregation scheme instead");
    const int64_t subsets = int64_t{1} << n;
    std::vector<DiagGaussian> comps;
    comps.reserve(static_cast<size_t>(subsets));
    for (int64_t bitset = 0; bitset < subsets; ++bitset) {
        FeatureList sub;
        MaskSubset sub_mask = MaskSubset::empty(mask.M);
        for (int i = 0; i < n; ++i) {
            if (bitset & (int64_t{1} << i)) {
                sub.push_back(present[static_cast<size_t>(i)]);
                sub_mask.bits[static_cast<size_t>(present[static_cast<size_t>(i)].first)] = 1;
            }
        }
        comps.push_back(aggregate_poe(sub, sub_mask, prior));
    }
    Value logits = prior.mean.tape->constant(Tensor::zeros({subsets}));
    return Mixture::make(std::move(comps), logits);
}

// --- learnable schemes -------------------------------------------------------------

EncoderOutput aggregate_sum_pooling(EvalContext& ctx, const EncoderConfig& cfg,
                                    const FeatureList& features, const MaskSubset& mask) {
    auto present = present_sorted(features, mask);
    if (present.empty()) throw ConfigError("aggregate_sum_pooling: empty subset handled by caller");
    Value acc;
    bool first = true;
    for (const auto& [s, h] : present) {
        Value chi = mlp_forward(ctx, "agg.chi", h, cfg.inner_hidden, cfg.attn_width, cfg.act);
        acc = first ? chi : add(acc, chi);
        first = false;
    }
    Value out = mlp_forward(ctx, "agg.rho", acc, cfg.outer_hidden, head_dim(cfg), cfg.act);
    return parse_head(cfg, out);
}

EncoderOutput aggregate_self_attention(EvalContext& ctx, const EncoderConfig& cfg,
                                       const FeatureList& features, const MaskSubset& mask) {
    auto present = present_sorted(features, mask);
    if (present.empty())
        throw ConfigError("aggregate_self_attention: empty subset handled by caller");
    // Fixed-length token matrix; absent slots hold zero rows throughout.
    std::vector<Value> rows(static_cast<size_t>(cfg.M),
                            ctx.constant(Tensor::zeros({cfg.feature_dim})));
    for (const auto& [s, h] : present) rows[static_cast<size_t>(s)] = h;
    Value tokens = mask_rows(stack_rows(rows), mask.bits);
    Value embedded =
        mask_rows(mlp_rows(ctx, "agg.chi", tokens, cfg.inner_hidden, cfg.act), mask.bits);
    Value g = attention_blocks(ctx, cfg, "agg.attn", embedded, mask);
    Value pooled = masked_row_sum(g, mask.bits);
    Value out = mlp_forward(ctx, "agg.rho", pooled, cfg.outer_hidden, head_dim(cfg), cfg.act);
    return parse_head(cfg, out);
}

std::pair<std::vector<DiagGaussian>, std::vector<uint8_t>> aggregate_equivariant(
    EvalContext& ctx, const EncoderConfig& cfg, Value z_shared, const FeatureList& features,
    const MaskSubset& mask) {
    if (!cfg.private_latents)
        throw ConfigError("aggregate_equivariant: encoder has no private latents");
    const int64_t dp = cfg.private_dim;
    std::vector<DiagGaussian> out(static_cast<size_t>(cfg.M), standard_normal(ctx.tape(), dp));
    std::vector<uint8_t> fallback(static_cast<size_t>(cfg.M), 1);
    auto present = present_sorted(features, mask);
    if (present.empty()) return {out, fallback};

    switch (cfg.scheme) {
        case Scheme::Poe: {
            // Per-modality (mu, log sigma) heads; no z' coupling.
            for (const auto& [s, h] : present) {
                out[static_cast<size_t>(s)] = feature_as_gaussian(h);
                fallback[static_cast<size_t>(s)] = 0;
            }
            return {out, fallback};
        }
        case Scheme::SumPooling: {
            Value acc;
            bool first = true;
            for (const auto& [s, h] : present) {
                Value c0 =
                    mlp_forward(ctx, "agg.eq.chi0", h, cfg.inner_hidden, cfg.attn_width, cfg.act);
                acc = first ? c0 : add(acc, c0);
                first = false;
            }
            Value c1 = mlp_forward(ctx, "agg.eq.chi1", z_shared, cfg.inner_hidden, cfg.attn_width,
                                   cfg.act);
            Value base = add(acc, c1);
            for (const auto& [s, h] : present) {
                Value c2 =
                    mlp_forward(ctx, "agg.eq.chi2", h, cfg.inner_hidden, cfg.attn_width, cfg.act);
                Value head = mlp_forward(ctx, "agg.eq.rho", add(base, c2), cfg.outer_hidden,
                                         2 * dp, cfg.act);
                out[static_cast<size_t>(s)] = feature_as_gaussian(head);
                fallback[static_cast<size_t>(s)] = 0;
            }
            return {out, fallback};
        }
        case Scheme::SelfAttention: {
            Value cz = mlp_forward(ctx, "agg.eq.chi2", z_shared, cfg.inner_hidden, cfg.attn_width,
                                   cfg.act);
            std::vector<Value> rows(static_cast<size_t>(cfg.M),
                                    ctx.constant(Tensor::zeros({cfg.attn_width})));
            for (const auto& [s, h] : present) {
                Value ch =
                    mlp_forward(ctx, "agg.eq.chi1", h, cfg.inner_hidden, cfg.attn_width, cfg.act);
                rows[static_cast<size_t>(s)] = add(ch, cz);
            }
            Value tokens = mask_rows(stack_rows(rows), mask.bits);
            Value g = attention_blocks(ctx, cfg, "agg.eq.attn", tokens, mask);
            Value heads = add(matmul(g, transpose(ctx.param("agg.eq.head.w0"))),
                              broadcast_rows(ctx.param("agg.eq.head.b0"), cfg.M));
            for (const auto& [s, h] : present) {
                out[static_cast<size_t>(s)] = feature_as_gaussian(row(heads, s));
                fallback[static_cast<size_t>(s)] = 0;
            }
            return {out, fallback};
        }
        default:
            throw ConfigError(
                "aggregate_equivariant: scheme must be poe, sum_pooling, or self_attention");
    }
}

// --- LearnedEncoder ------------------------------------------------------------------

LearnedEncoder::LearnedEncoder(EncoderConfig cfg, const GenerativeModel* model)
    : cfg_(std::move(cfg)), model_(model) {
    if (cfg_.M <= 0 || static_cast<int>(cfg_.modality_dims.size()) != cfg_.M)
        throw ConfigError("encoder: modality dims must match M");
    const bool fixed = cfg_.scheme == Scheme::Poe || cfg_.scheme == Scheme::Moe ||
                       cfg_.scheme == Scheme::Mopoe;
    if (cfg_.private_latents && (cfg_.scheme == Scheme::Moe || cfg_.scheme == Scheme::Mopoe))
        throw ConfigError("encoder: private latents require poe, sum_pooling, or self_attention");
    if (model_ && model_->prior.kind == PriorKind::GaussianMixture && fixed)
        throw ConfigError(
            "encoder: fixed schemes need a Gaussian prior expert; "
            "use sum_pooling or self_attention with mixture priors");
    if (!cfg_.private_latents && model_ && cfg_.latent_dim != model_->latent_dim())
        throw ConfigError("encoder: latent dimension does not match the generative model");
    if (cfg_.private_latents && model_ &&
        (!model_->private_layout || model_->private_layout->shared_dim != cfg_.shared_dim ||
         model_->private_layout->private_dim != cfg_.private_dim))
        throw ConfigError("encoder: private layout does not match the generative model");
}

void LearnedEncoder::init_params(ParamMap& params, Rng& rng) const {
    const int64_t feat = cfg_.effective_feature_dim();
    for (int s = 0; s < cfg_.M; ++s) {
        if (cfg_.private_latents && cfg_.scheme == Scheme::Poe) {
            mlp_init(params, "encsh" + std::to_string(s),
                     cfg_.modality_dims[static_cast<size_t>(s)], cfg_.encoder_hidden,
                     2 * cfg_.shared_dim, rng);
            mlp_init(params, "encpr" + std::to_string(s),
                     cfg_.modality_dims[static_cast<size_t>(s)], cfg_.encoder_hidden,
                     2 * cfg_.private_dim, rng);
        } else {
            mlp_init(params, "enc" + std::to_string(s),
                     cfg_.modality_dims[static_cast<size_t>(s)], cfg_.encoder_hidden, feat, rng);
        }
    }
    if (cfg_.scheme == Scheme::SumPooling) {
        mlp_init(params, "agg.chi", cfg_.feature_dim, cfg_.inner_hidden, cfg_.attn_width, rng);
        mlp_init(params, "agg.rho", cfg_.attn_width, cfg_.outer_hidden, head_dim(cfg_), rng);
    } else if (cfg_.scheme == Scheme::SelfAttention) {
        mlp_init(params, "agg.chi", cfg_.feature_dim, cfg_.inner_hidden, cfg_.attn_width, rng);
        attention_init(params, cfg_, "agg.attn", rng);
        mlp_init(params, "agg.rho", cfg_.attn_width, cfg_.outer_hidden, head_dim(cfg_), rng);
    }
    if (cfg_.private_latents && cfg_.scheme == Scheme::SumPooling) {
        mlp_init(params, "agg.eq.chi0", cfg_.feature_dim, cfg_.inner_hidden, cfg_.attn_width, rng);
        mlp_init(params, "agg.eq.chi1", cfg_.shared_dim, cfg_.inner_hidden, cfg_.attn_width, rng);
        mlp_init(params, "agg.eq.chi2", cfg_.feature_dim, cfg_.inner_hidden, cfg_.attn_width, rng);
        mlp_init(params, "agg.eq.rho", cfg_.attn_width, cfg_.outer_hidden, 2 * cfg_.private_dim,
                 rng);
    } else if (cfg_.private_latents && cfg_.scheme == Scheme::SelfAttention) {
        mlp_init(params, "agg.eq.chi1", cfg_.feature_dim, cfg_.inner_hidden, cfg_.attn_width, rng);
        mlp_init(params, "agg.eq.chi2", cfg_.shared_dim, cfg_.inner_hidden, cfg_.attn_width, rng);
        attention_init(params, cfg_, "agg.eq.attn", rng);
        mlp_init(params, "agg.eq.head", cfg_.attn_width, {}, 2 * cfg_.private_dim, rng);
    }
}

Value LearnedEncoder::encode_modality(EvalContext& ctx, int s, const Tensor& x_s) const {
    if (x_s.numel() != cfg_.modality_dims[static_cast<size_t>(s)])
        throw ShapeError("encode_modality: modality " + std::to_string(s) + " expects dim " +
                         std::to_string(cfg_.modality_dims[static_cast<size_t>(s)]) + ", got " +
                         shape_str(x_s.shape()));
    Value in = ctx.constant(x_s);
    return mlp_forward(ctx, "enc" + std::to_string(s), in, cfg_.encoder_hidden,
                       cfg_.effective_feature_dim(), cfg_.act);
}

FeatureList LearnedEncoder::encode_features(EvalContext& ctx, const std::vector<Tensor>& x,
                                            const MaskSubset& mask) const {
    FeatureList f;
    for (int s : mask.indices())
        f.emplace_back(s, encode_modality(ctx, s, x[static_cast<size_t>(s)]));
    return f;
}

EncoderOutput LearnedEncoder::prior_output(EvalContext& ctx) const {
    const int64_t d = cfg_.private_latents ? cfg_.shared_dim : cfg_.latent_dim;
    if (model_ && model_->prior.kind == PriorKind::GaussianMixture && !cfg_.private_latents)
        return EncoderOutput{prior_mixture(ctx, *model_)};
    return EncoderOutput{standard_normal(ctx.tape(), d)};
}

EncoderOutput LearnedEncoder::encode(EvalContext& ctx, const std::vector<Tensor>& x,
                                     const MaskSubset& mask) const {
    if (static_cast<int>(x.size()) != cfg_.M) throw ShapeError("encode: wrong modality count");
    if (mask.none()) return prior_output(ctx);
    FeatureList f = encode_features(ctx, x, mask);
    switch (cfg_.scheme) {
        case Scheme::Poe: {
            const int64_t d = cfg_.private_latents ? cfg_.shared_dim : cfg_.latent_dim;
            return EncoderOutput{aggregate_poe(f, mask, standard_normal(ctx.tape(), d))};
        }
        case Scheme::Moe: return EncoderOutput{aggregate_moe(f, mask)};
        case Scheme::Mopoe: {
            const int64_t d = cfg_.private_latents ? cfg_.shared_dim : cfg_.latent_dim;
            return EncoderOutput{aggregate_mopoe(f, mask, standard_normal(ctx.tape(), d))};
        }
        case Scheme::SumPooling: return aggregate_sum_pooling(ctx, cfg_, f, mask);
        case Scheme::SelfAttention: return aggregate_self_attention(ctx, cfg_, f, mask);
    }
    throw ConfigError("encode: unknown scheme");
}

DiagGaussian LearnedEncoder::encode_shared(EvalContext& ctx, const std::vector<Tensor>& x,
                                           const MaskSubset& mask) const {
    if (!cfg_.private_latents) throw ConfigError("encode_shared: encoder has no private latents");
    if (mask.none()) return standard_normal(ctx.tape(), cfg_.shared_dim);
    if (cfg_.scheme == Scheme::Poe) {
        FeatureList f;
        for (int s : mask.indices()) {
            Value in = ctx.constant(x[static_cast<size_t>(s)]);
            f.emplace_back(s, mlp_forward(ctx, "encsh" + std::to_string(s), in, cfg_.encoder_hidden,
                                          2 * cfg_.shared_dim, cfg_.act));
        }
        return aggregate_poe(f, mask, standard_normal(ctx.tape(), cfg_.shared_dim));
    }
    FeatureList f = encode_features(ctx, x, mask);
    EncoderOutput out = cfg_.scheme == Scheme::SumPooling
                            ? aggregate_sum_pooling(ctx, cfg_, f, mask)
                            : aggregate_self_attention(ctx, cfg_, f, mask);
    return out.gaussian();
}

std::pair<std::vector<DiagGaussian>, std::vector<uint8_t>> LearnedEncoder::encode_privates_at(
    EvalContext& ctx, const std::vector<Tensor>& x, const MaskSubset& mask, Value z_shared) const {
    if (!cfg_.private_latents)
        throw ConfigError("encode_privates_at: encoder has no private latents");
    FeatureList f;
    if (cfg_.scheme == Scheme::Poe) {
        for (int s : mask.indices()) {
            Value in = ctx.constant(x[static_cast<size_t>(s)]);
            f.emplace_back(s, mlp_forward(ctx, "encpr" + std::to_string(s), in, cfg_.encoder_hidden,
                                          2 * cfg_.private_dim, cfg_.act));
        }
    } else {
        f = encode_features(ctx, x, mask);
    }
    return aggregate_equivariant(ctx, cfg_, z_shared, f, mask);
}

// --- EncoderBase defaults -----------------------------------------------------------

DiagGaussian EncoderBase::encode_shared(EvalContext&, const std::vector<Tensor>&,
                                        const MaskSubset&) const {
    throw ConfigError("encoder does not support private latents");
}

std::pair<std::vector<DiagGaussian>, std::vector<uint8_t>> EncoderBase::encode_privates_at(
    EvalContext&, const std::vector<Tensor>&, const MaskSubset&, Value) const {
    throw ConfigError("encoder does not support private latents");
}

}  // namespace mmvb
