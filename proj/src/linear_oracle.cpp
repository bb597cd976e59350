#include "mmvb/linear_oracle.hpp"

#include <cmath>

namespace mmvb {

int64_t LinearGaussianModel::total_dim() const {
    int64_t d = 0;
    for (const Tensor& w : loadings) d += w.dim(0);
    return d;
}

Tensor LinearGaussianModel::stacked_loading(const MaskSubset& mask) const {
    int64_t rows = 0;
    for (int s : mask.indices()) rows += modality_dim(s);
    Tensor w = Tensor::zeros({rows, latent_dim});
    int64_t r = 0;
    for (int s : mask.indices()) {
        const Tensor& ws = loadings[static_cast<size_t>(s)];
        for (int64_t i = 0; i < ws.dim(0); ++i)
            for (int64_t j = 0; j < latent_dim; ++j) w.at(r + i, j) = ws.at(i, j);
        r += ws.dim(0);
    }
    return w;
}

Tensor LinearGaussianModel::stacked_bias(const MaskSubset& mask) const {
    int64_t rows = 0;
    for (int s : mask.indices()) rows += modality_dim(s);
    Tensor b({rows});
    int64_t r = 0;
    for (int s : mask.indices()) {
        const Tensor& bs = biases[static_cast<size_t>(s)];
        for (int64_t i = 0; i < bs.numel(); ++i) b[r + i] = bs[i];
        r += bs.numel();
    }
    return b;
}

Tensor LinearGaussianModel::stacked_x(const std::vector<Tensor>& x, const MaskSubset& mask) const {
    int64_t rows = 0;
    for (int s : mask.indices()) rows += modality_dim(s);
    Tensor v({rows});
    int64_t r = 0;
    for (int s : mask.indices()) {
        const Tensor& xs = x[static_cast<size_t>(s)];
        if (xs.numel() != modality_dim(s))
            throw ShapeError("stacked_x: modality " + std::to_string(s) + " has wrong dimension");
        for (int64_t i = 0; i < xs.numel(); ++i) v[r + i] = xs[i];
        r += xs.numel();
    }
    return v;
}

LinearGaussianModel generate_model(Rng& rng, const LinearModelConfig& cfg) {
    LinearModelConfig c = cfg;
    if (c.modality_dims.empty())
        c.modality_dims.assign(static_cast<size_t>(c.M), c.latent_dim + 3);
    if (static_cast<int>(c.modality_dims.size()) != c.M)
        throw ConfigError("generate_model: modality_dims size must equal M");

    LinearGaussianModel m;
    m.sigma = c.sigma;
    if (!c.private_blocks) {
        m.latent_dim = c.latent_dim;
        for (int s = 0; s < c.M; ++s) {
            const int64_t ds = c.modality_dims[static_cast<size_t>(s)];
            if (m.latent_dim > ds)
                throw ConfigError("generate_model: latent dim exceeds modality dim " +
                                  std::to_string(s));
            Tensor raw = rng.uniform_tensor({ds, m.latent_dim}, -1.0, 1.0);
            m.loadings.push_back(linalg::qr_q(raw));
            m.biases.push_back(rng.normal_tensor({ds}));
        }
        return m;
    }

    const int64_t dsh = c.shared_dim, dp = c.private_dim;
    if (dsh <= 0 && dp <= 0) throw ConfigError("generate_model: empty private layout");
    m.latent_dim = dsh + static_cast<int64_t>(c.M) * dp;
    m.private_layout = PrivateLayout{dsh, dp};
    for (int s = 0; s < c.M; ++s) {
        const int64_t ds = c.modality_dims[static_cast<size_t>(s)];
        if (dsh + dp > ds)
            throw ConfigError("generate_model: shared+private dim exceeds modality dim");
        Tensor raw = rng.uniform_tensor({ds, dsh + dp}, -1.0, 1.0);
        Tensor q = linalg::qr_q(raw);  // jointly orthonormal [W'_s, W~_s]
        Tensor w = Tensor::zeros({ds, m.latent_dim});
        for (int64_t i = 0; i < ds; ++i) {
            for (int64_t j = 0; j < dsh; ++j) w.at(i, j) = q.at(i, j);
            for (int64_t j = 0; j < dp; ++j) w.at(i, dsh + s * dp + j) = q.at(i, dsh + j);
        }
        m.loadings.push_back(std::move(w));
        m.biases.push_back(rng.normal_tensor({ds}));
    }
    return m;
}

Dataset sample_dataset(const LinearGaussianModel& model, int64_t n, Rng& rng, double eta) {
    if (n < 1) throw ConfigError("sample_dataset: need n >= 1");
    if (eta < 0.0 || eta >= 1.0) throw ConfigError("sample_dataset: eta must be in [0, 1)");
    Dataset d;
    d.M = model.modality_count();
    for (int s = 0; s < d.M; ++s) {
        d.modality_dims.push_back(model.modality_dim(s));
        d.categorical.push_back(false);
    }
    d.x.reserve(static_cast<size_t>(n));
    d.latents.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        Tensor z = rng.normal_tensor({model.latent_dim});
        std::vector<Tensor> xs;
        for (int s = 0; s < d.M; ++s) {
            Tensor mean = linalg::matvec(model.loadings[static_cast<size_t>(s)], z);
            for (int64_t j = 0; j < mean.numel(); ++j)
                mean[j] += model.biases[static_cast<size_t>(s)][j] + model.sigma * rng.normal();
            xs.push_back(std::move(mean));
        }
        MaskSubset obs = MaskSubset::full(d.M);
        if (eta > 0.0)
            for (int s = 0; s < d.M; ++s)
                if (rng.uniform() < eta) obs.bits[static_cast<size_t>(s)] = 0;
        d.x.push_back(std::move(xs));
        d.latents.push_back(std::move(z));
        d.observed.push_back(std::move(obs));
    }
    return d;
}

FullGaussian exact_posterior(const LinearGaussianModel& model, const std::vector<Tensor>& x,
                             const MaskSubset& mask, double beta) {
    const int64_t d = model.latent_dim;
    if (mask.none()) return FullGaussian{Tensor::zeros({d}), linalg::identity(d)};
    const double s2b = model.sigma * model.sigma * beta;
    Tensor w = model.stacked_loading(mask);
    Tensor k = linalg::matmul_tn(w, w);
    for (int64_t i = 0; i < d; ++i) k.at(i, i) += s2b;
    Tensor l = linalg::cholesky(k);
    Tensor resid = model.stacked_x(x, mask);
    Tensor b = model.stacked_bias(mask);
    for (int64_t i = 0; i < resid.numel(); ++i) resid[i] -= b[i];
    Tensor wt_r = Tensor::zeros({d});
    for (int64_t i = 0; i < w.dim(0); ++i)
        for (int64_t j = 0; j < d; ++j) wt_r[j] += w.at(i, j) * resid[i];
    Tensor mean = linalg::cholesky_solve(l, wt_r);
    // covariance = s2b * K^{-1}
    Tensor cov = Tensor::zeros({d, d});
    Tensor e = Tensor::zeros({d});
    for (int64_t j = 0; j < d; ++j) {
        e[j] = 1.0;
        Tensor col = linalg::cholesky_solve(l, e);
        for (int64_t i = 0; i < d; ++i) cov.at(i, j) = s2b * col[i];
        e[j] = 0.0;
    }
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = 0; j < i; ++j) {
            const double v = 0.5 * (cov.at(i, j) + cov.at(j, i));
            cov.at(i, j) = v;
            cov.at(j, i) = v;
        }
    return FullGaussian{std::move(mean), std::move(cov)};
}

double exact_marginal_llh(const LinearGaussianModel& model, const std::vector<Tensor>& x,
                          const MaskSubset& mask, double beta) {
    if (mask.none()) return 0.0;
    const double s2b = model.sigma * model.sigma * beta;
    Tensor w = model.stacked_loading(mask);
    Tensor c = linalg::matmul_nt(w, w);
    for (int64_t i = 0; i < c.dim(0); ++i) c.at(i, i) += s2b;
    FullGaussian g{model.stacked_bias(mask), std::move(c)};
    return full_gaussian_log_prob(model.stacked_x(x, mask), g);
}

double exact_conditional_llh(const LinearGaussianModel& model, const std::vector<Tensor>& x,
                             const MaskSubset& mask) {
    if (mask.all()) return 0.0;
    return exact_marginal_llh(model, x, MaskSubset::full(model.modality_count()), 1.0) -
           exact_marginal_llh(model, x, mask, 1.0);
}

double marginal_entropy(const LinearGaussianModel& model, const MaskSubset& mask) {
    if (mask.none()) return 0.0;
    const double s2 = model.sigma * model.sigma;
    Tensor w = model.stacked_loading(mask);
    Tensor c = linalg::matmul_nt(w, w);
    for (int64_t i = 0; i < c.dim(0); ++i) c.at(i, i) += s2;
    return full_gaussian_entropy(FullGaussian{Tensor::zeros({c.dim(0)}), std::move(c)});
}

double conditional_entropy(const LinearGaussianModel& model, const MaskSubset& mask) {
    return marginal_entropy(model, MaskSubset::full(model.modality_count())) -
           marginal_entropy(model, mask);
}

MleFit mle_fit(const Dataset& data, int64_t latent_dim) {
    std::vector<size_t> complete;
    for (size_t i = 0; i < data.size(); ++i)
        if (data.observed[i].all()) complete.push_back(i);
    if (complete.empty()) throw ConfigError("mle_fit: no fully observed samples");
    int64_t dx = 0;
    for (int64_t dim : data.modality_dims) dx += dim;
    if (latent_dim >= dx) throw ConfigError("mle_fit: latent dim must be below total data dim");
    const double n = static_cast<double>(complete.size());

    auto stack_row = [&](size_t i) {
        Tensor v({dx});
        int64_t r = 0;
        for (int s = 0; s < data.M; ++s) {
            const Tensor& xs = data.x[i][static_cast<size_t>(s)];
            for (int64_t j = 0; j < xs.numel(); ++j) v[r + j] = xs[j];
            r += xs.numel();
        }
        return v;
    };

    Tensor mean = Tensor::zeros({dx});
    for (size_t i : complete) {
        Tensor v = stack_row(i);
        for (int64_t j = 0; j < dx; ++j) mean[j] += v[j];
    }
    for (int64_t j = 0; j < dx; ++j) mean[j] /= n;

    Tensor cov = Tensor::zeros({dx, dx});
    for (size_t i : complete) {
        Tensor v = stack_row(i);
        for (int64_t j = 0; j < dx; ++j) v[j] -= mean[j];
        for (int64_t a = 0; a < dx; ++a)
            for (int64_t b = 0; b <= a; ++b) cov.at(a, b) += v[a] * v[b];
    }
    for (int64_t a = 0; a < dx; ++a)
        for (int64_t b = 0; b <= a; ++b) {
            const double v = cov.at(a, b) / n;
            cov.at(a, b) = v;
            cov.at(b, a) = v;
        }

    linalg::SymEig eig = linalg::jacobi_eigen(cov, 100, 1e-12);

    // Noise floor from the discarded spectrum, W = U_D (Lambda_D - sigma^2 I)^(1/2).
    double trail = 0.0;
    for (int64_t j = latent_dim; j < dx; ++j) trail += eig.values[j];
    const double sigma2 = trail / static_cast<double>(dx - latent_dim);

    Tensor w = Tensor::zeros({dx, latent_dim});
    for (int64_t j = 0; j < latent_dim; ++j) {
        const double scale = std::sqrt(std::max(0.0, eig.values[j] - sigma2));
        for (int64_t i = 0; i < dx; ++i) w.at(i, j) = scale * eig.vectors.at(i, j);
    }

    MleFit fit;
    fit.loading = std::move(w);
    fit.bias = std::move(mean);
    fit.sigma2 = sigma2;

    LinearGaussianModel fitted = fit.as_model(data);
    double llh = 0.0;
    MaskSubset full = MaskSubset::full(data.M);
    for (size_t i : complete) llh += exact_marginal_llh(fitted, data.x[i], full, 1.0);
    fit.llh = llh / n;
    return fit;
}

LinearGaussianModel MleFit::as_model(const Dataset& data) const {
    LinearGaussianModel m;
    m.latent_dim = loading.dim(1);
    m.sigma = std::sqrt(sigma2);
    int64_t r = 0;
    for (int s = 0; s < data.M; ++s) {
        const int64_t ds = data.modality_dims[static_cast<size_t>(s)];
        Tensor w({ds, m.latent_dim});
        Tensor b({ds});
        for (int64_t i = 0; i < ds; ++i) {
            b[i] = bias[r + i];
            for (int64_t j = 0; j < m.latent_dim; ++j) w.at(i, j) = loading.at(r + i, j);
        }
        r += ds;
        m.loadings.push_back(std::move(w));
        m.biases.push_back(std::move(b));
    }
    return m;
}

double mean_exact_llh(const LinearGaussianModel& model, const Dataset& data,
                      const MaskSubset& mask, double beta) {
    double acc = 0.0;
    for (size_t i = 0; i < data.size(); ++i)
        acc += exact_marginal_llh(model, data.x[i], mask, beta);
    return acc / static_cast<double>(data.size());
}

// --- AnalyticEncoder ----------------------------------------------------------

AnalyticEncoder::AnalyticEncoder(const LinearGaussianModel& model, double beta,
                                 double log_std_inflate)
    : model_(&model), beta_(beta), log_std_inflate_(log_std_inflate) {}

DiagGaussianT AnalyticEncoder::encode_plain(const std::vector<Tensor>& x,
                                            const MaskSubset& mask) const {
    FullGaussian post = exact_posterior(*model_, x, mask, beta_);
    const int64_t d = post.mean.numel();
    Tensor log_std({d});
    for (int64_t i = 0; i < d; ++i)
        log_std[i] = 0.5 * std::log(post.covariance.at(i, i)) + log_std_inflate_;
    return DiagGaussianT{std::move(post.mean), std::move(log_std)};
}

EncoderOutput AnalyticEncoder::encode(EvalContext& ctx, const std::vector<Tensor>& x,
                                      const MaskSubset& mask) const {
    DiagGaussianT p = encode_plain(x, mask);
    return EncoderOutput{
        DiagGaussian{ctx.constant(std::move(p.mean)), ctx.constant(std::move(p.log_std))}};
}

std::pair<EncoderConfig, ParamMap> posterior_poe_encoder(const LinearGaussianModel& model,
                                                         double beta) {
    const int64_t d = model.latent_dim;
    EncoderConfig cfg;
    cfg.scheme = Scheme::Poe;
    cfg.M = model.modality_count();
    for (int s = 0; s < cfg.M; ++s) cfg.modality_dims.push_back(model.modality_dim(s));
    cfg.latent_dim = d;
    cfg.encoder_hidden = {};

    const double log_sigma_beta = 0.5 * std::log(model.sigma * model.sigma * beta);
    ParamMap params;
    for (int s = 0; s < cfg.M; ++s) {
        const Tensor& w = model.loadings[static_cast<size_t>(s)];
        const Tensor& b = model.biases[static_cast<size_t>(s)];
        const int64_t ds = w.dim(0);
        Tensor weight = Tensor::zeros({2 * d, ds});  // mean rows = W^T, log-std rows = 0
        for (int64_t i = 0; i < d; ++i)
            for (int64_t j = 0; j < ds; ++j) weight.at(i, j) = w.at(j, i);
        Tensor bias = Tensor::zeros({2 * d});
        for (int64_t i = 0; i < d; ++i) {
            double acc = 0.0;
            for (int64_t j = 0; j < ds; ++j) acc += w.at(j, i) * b[j];
            bias[i] = -acc;
        }
        for (int64_t i = d; i < 2 * d; ++i) bias[i] = log_sigma_beta;
        params["enc" + std::to_string(s) + ".w0"] = std::move(weight);
        params["enc" + std::to_string(s) + ".b0"] = std::move(bias);
    }
    return {cfg, std::move(params)};
}

GenerativeModel as_generative_model(const LinearGaussianModel& model) {
    GenerativeModel g;
    g.prior.kind = PriorKind::StandardGaussian;
    g.prior.dim = model.latent_dim;
    g.private_layout = model.private_layout;
    for (int s = 0; s < model.modality_count(); ++s) {
        DecoderSpec d;
        d.modality = s;
        d.kind = DecoderKind::LinearGaussian;
        d.out_dim = model.modality_dim(s);
        d.scale_mode = ScaleMode::Fixed;
        d.fixed_log_scale = std::log(model.sigma);
        g.decoders.push_back(d);
    }
    return g;
}

ParamMap true_decoder_params(const LinearGaussianModel& model) {
    ParamMap params;
    const auto layout = model.private_layout;
    for (int s = 0; s < model.modality_count(); ++s) {
        const Tensor& w = model.loadings[static_cast<size_t>(s)];
        if (!layout) {
            params["dec" + std::to_string(s) + ".w0"] = w;
        } else {
            // compact per-decoder weights over (z', z~_s)
            const int64_t dsh = layout->shared_dim, dp = layout->private_dim;
            Tensor c({w.dim(0), dsh + dp});
            for (int64_t i = 0; i < w.dim(0); ++i) {
                for (int64_t j = 0; j < dsh; ++j) c.at(i, j) = w.at(i, j);
                for (int64_t j = 0; j < dp; ++j) c.at(i, dsh + j) = w.at(i, dsh + s * dp + j);
            }
            params["dec" + std::to_string(s) + ".w0"] = std::move(c);
        }
        params["dec" + std::to_string(s) + ".b0"] = model.biases[static_cast<size_t>(s)];
    }
    return params;
}

}  // namespace mmvb
