#pragma once

// Segment-wise Gaussian latents with a recurrent prior and a
// residual posterior.
//
//   prior      p(z_t | z_{t-1}, x_{<t}) = N(mu_t, diag(exp(log_sigma2_t)))
//              [mu_t, log_sigma2_t] = z_{t-1} [W_mu1 | W_sigma1] + ctx_{t-1} [W_mu2 | W_sigma2]
//              with p(z_1) = N(0, I)
//   posterior  q(z_t | z_{<t}, x_{<=t}) = N(mu_t + dmu_t, diag(sigma2_t * dsigma2_t))
//              [dmu_t, log dsigma2_t] = LayerNorm_{gamma,beta}(local_t [W_mu_g | W_sigma_g])
//
// Row-vector convention throughout: vectors are 1 x n, a batch of T
// vectors is T x n, and `x W` is the linear map.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracevae/normalization.hpp"
#include "tracevae/params.hpp"
#include "tracevae/rng.hpp"
#include "tracevae/tensor.hpp"
#include "tracevae/transformer.hpp"

namespace tracevae {

struct LatentConfig {
    std::size_t latent_dim = 32;
    double gamma = 3.0;     // fixed posterior layer-norm gain
    double beta_init = 0.0; // trainable posterior layer-norm shift
    bool use_spectral_norm = false;
    bool parallel = false;
    // The posterior layer norm runs without a variance floor so that the
    // output mass identity holds exactly; constant rows map to beta.
    double posterior_ln_eps = 0.0;

    void validate() const {
        if (latent_dim < 1) throw std::invalid_argument("latent config: latent_dim must be >= 1");
    }
};

struct PriorHead {
    Tensor w_mu1;    // l x l
    Tensor w_mu2;    // h x l
    Tensor w_sigma1; // l x l
    Tensor w_sigma2; // h x l

    // [W_mu1; W_mu2], the (l + h) x l matrix acting on [z_prev, ctx].
    Tensor w_mu_full() const { return concat_rows({w_mu1, w_mu2}); }
    Tensor w_sigma_full() const { return concat_rows({w_sigma1, w_sigma2}); }
};

struct PosteriorHead {
    Tensor w_mu_g;    // h x l
    Tensor w_sigma_g; // h x l
    double gamma = 3.0;
    Tensor beta; // 1 x 1
    double eps = 0.0;
};

struct LatentHeads {
    PriorHead prior;
    PosteriorHead posterior;

    std::size_t latent_dim() const { return prior.w_mu1.rows(); }
    std::size_t model_dim() const { return prior.w_mu2.rows(); }
};

inline LatentHeads make_latent_heads(const LatentConfig &cfg, std::size_t model_dim, ParamStore &store, RngStream &rng) {
    cfg.validate();
    const std::size_t l = cfg.latent_dim, h = model_dim;
    const double prior_std = 0.1 / std::sqrt(static_cast<double>(l + h));
    const double post_std = 1.0 / std::sqrt(static_cast<double>(h));
    LatentHeads heads;
    heads.prior.w_mu1 = store.add("prior.w_mu1", randn(l, l, prior_std, rng));
    heads.prior.w_mu2 = store.add("prior.w_mu2", randn(h, l, prior_std, rng));
    heads.prior.w_sigma1 = store.add("prior.w_sigma1", randn(l, l, prior_std, rng));
    heads.prior.w_sigma2 = store.add("prior.w_sigma2", randn(h, l, prior_std, rng));
    heads.posterior.w_mu_g = store.add("posterior.w_mu_g", randn(h, l, post_std, rng));
    heads.posterior.w_sigma_g = store.add("posterior.w_sigma_g", randn(h, l, post_std, rng));
    heads.posterior.gamma = cfg.gamma;
    heads.posterior.beta = store.add("posterior.beta", Tensor::scalar(cfg.beta_init));
    heads.posterior.eps = cfg.posterior_ln_eps;
    return heads;
}

struct GaussianParams {
    Tensor mu;         // n x l
    Tensor log_sigma2; // n x l
};

// Prior parameters for a batch of (z_prev, ctx_prev) rows. The first
// segment's standard-normal prior is the caller's responsibility.
inline GaussianParams prior_params(const PriorHead &f, const Tensor &z_prev, const Tensor &ctx_prev) {
    if (z_prev.cols() != f.w_mu1.rows() || ctx_prev.cols() != f.w_mu2.rows() || z_prev.rows() != ctx_prev.rows())
        throw ShapeError("prior_params: z_prev " + z_prev.shape_str() + " / ctx " + ctx_prev.shape_str() +
                         " do not fit heads of latent dim " + std::to_string(f.w_mu1.rows()));
    return {add(matmul(z_prev, f.w_mu1), matmul(ctx_prev, f.w_mu2)),
            add(matmul(z_prev, f.w_sigma1), matmul(ctx_prev, f.w_sigma2))};
}

inline GaussianParams standard_normal_params(std::size_t rows, std::size_t l) { return {Tensor(rows, l), Tensor(rows, l)}; }

// Residual deltas: layer norm over the concatenated 2l outputs of g, then
// split into [dmu | log dsigma2].
inline GaussianParams posterior_delta(const PosteriorHead &g, const Tensor &repr) {
    if (repr.cols() != g.w_mu_g.rows())
        throw ShapeError("posterior_delta: representation " + repr.shape_str() + " does not match head input dim " +
                         std::to_string(g.w_mu_g.rows()));
    const std::size_t l = g.w_mu_g.cols();
    Tensor raw = concat_cols({matmul(repr, g.w_mu_g), matmul(repr, g.w_sigma_g)});
    Tensor normed = layer_norm(raw, g.gamma, g.beta, g.eps);
    return {slice_cols(normed, 0, l), slice_cols(normed, l, l)};
}

// Per-row KL(q || p) for q = N(mu + dmu, sigma2 * dsigma2), p = N(mu, sigma2):
// 0.5 * sum_d (dmu^2 / sigma2 + dsigma2 - log dsigma2 - 1). Returns n x 1.
inline Tensor kl_rows(const Tensor &log_sigma2, const Tensor &delta_mu, const Tensor &log_delta_sigma2) {
    Tensor a = mul(square(delta_mu), exp(scale(log_sigma2, -1.0)));
    Tensor b = sub(exp(log_delta_sigma2), log_delta_sigma2);
    return scale(add_scalar(sum_cols(add(a, b)), -static_cast<double>(delta_mu.cols())), 0.5);
}

// Scalar KL for one segment. `mu` does not enter: the residual form makes
// the KL depend only on the prior scale and the deltas.
inline double kl_term(const std::vector<double> &mu, const std::vector<double> &log_sigma2,
                      const std::vector<double> &delta_mu, const std::vector<double> &log_delta_sigma2) {
    const std::size_t l = delta_mu.size();
    if (mu.size() != l || log_sigma2.size() != l || log_delta_sigma2.size() != l)
        throw ShapeError("kl_term: argument lengths differ");
    double s = 0.0;
    for (std::size_t d = 0; d < l; ++d)
        s += delta_mu[d] * delta_mu[d] / std::exp(log_sigma2[d]) + std::exp(log_delta_sigma2[d]) - log_delta_sigma2[d] - 1.0;
    return 0.5 * s;
}

// l (gamma^2 + beta^2) / (2 sigma2_max): the per-segment KL floor used as a
// training monitor.
inline double kl_lower_bound(std::size_t l, double gamma, double beta, double sigma2_max) {
    if (!(sigma2_max > 0.0)) throw std::invalid_argument("kl_lower_bound: sigma2_max must be positive");
    return static_cast<double>(l) * (gamma * gamma + beta * beta) / (2.0 * sigma2_max);
}

enum class SampleMode { posterior, prior };

// Whether the noise scale uses exp (exact) or exp(a) ~ 1 + a applied to the
// summed log-variance head outputs (the linearization the parallel sampler
// is built on).
enum class SigmaPath { exact, linearized };

struct Noise {
    Tensor eps; // T x l
    Tensor xi;  // T x l

    static Noise draw(std::size_t T, std::size_t l, RngStreams &rng) {
        Noise n{Tensor(T, l), Tensor(T, l)};
        for (double &x : n.eps.mutable_values()) x = rng.eps.normal();
        for (double &x : n.xi.mutable_values()) x = rng.xi.normal();
        return n;
    }

    static Noise zeros(std::size_t T, std::size_t l) { return {Tensor(T, l), Tensor(T, l)}; }
};

// Everything sampled for one sequence; all members are T x l. In prior mode
// the deltas are zero.
struct LatentTrajectory {
    Tensor mu;
    Tensor log_sigma2;
    Tensor delta_mu;
    Tensor log_delta_sigma2;
    Tensor eps;
    Tensor xi;
    Tensor z;

    std::size_t num_segments() const { return z.rows(); }

    // Posterior mean and log-variance rows.
    Tensor posterior_mean() const { return add(mu, delta_mu); }
    Tensor posterior_log_var() const { return add(log_sigma2, log_delta_sigma2); }
};

namespace detail {

inline void check_sampler_inputs(const LatentHeads &heads, const SegmentReprs &reprs, const Noise &noise) {
    const std::size_t T = reprs.num_segments(), l = heads.latent_dim();
    if (T == 0) throw std::invalid_argument("sampler: need at least one segment");
    if (reprs.local.rows() != T || reprs.context.cols() != heads.model_dim() || reprs.local.cols() != heads.model_dim())
        throw ShapeError("sampler: representations " + reprs.context.shape_str() + " / " + reprs.local.shape_str() +
                         " do not match heads");
    if (noise.eps.rows() < T || noise.eps.cols() != l || noise.xi.rows() < T || noise.xi.cols() != l)
        throw ShapeError("sampler: noise " + noise.eps.shape_str() + " too small for " + std::to_string(T) + " x " +
                         std::to_string(l));
}

// Context rows shifted down by one with a zero first row: row t is the
// representation of x_{<t}.
inline Tensor shifted_context(const Tensor &context) {
    const std::size_t T = context.rows();
    if (T == 1) return Tensor(1, context.cols());
    return concat_rows({Tensor(1, context.cols()), slice_rows(context, 0, T - 1)});
}

} // namespace detail

// Sequential sampler: one segment at a time, z_t = mean_t + eps_t * scale_t.
inline LatentTrajectory sample_sequential(const LatentHeads &heads, const SegmentReprs &reprs, SampleMode mode,
                                          const Noise &noise, SigmaPath path = SigmaPath::exact) {
    detail::check_sampler_inputs(heads, reprs, noise);
    const std::size_t T = reprs.num_segments(), l = heads.latent_dim();
    std::vector<Tensor> mus, lss, dms, lds, zs;
    Tensor z_prev;
    for (std::size_t t = 0; t < T; ++t) {
        GaussianParams p = t == 0 ? standard_normal_params(1, l)
                                  : prior_params(heads.prior, z_prev, slice_rows(reprs.context, t - 1, 1));
        GaussianParams d = mode == SampleMode::posterior ? posterior_delta(heads.posterior, slice_rows(reprs.local, t, 1))
                                                         : standard_normal_params(1, l);
        Tensor eps_t = slice_rows(noise.eps, t, 1);
        Tensor log_var = add(p.log_sigma2, d.log_sigma2);
        Tensor noise_scale = path == SigmaPath::exact ? exp(scale(log_var, 0.5)) : add_scalar(log_var, 1.0);
        Tensor z = add(add(p.mu, d.mu), mul(noise_scale, eps_t));
        mus.push_back(p.mu);
        lss.push_back(p.log_sigma2);
        dms.push_back(d.mu);
        lds.push_back(d.log_sigma2);
        zs.push_back(z);
        z_prev = z;
    }
    return {concat_rows(mus), concat_rows(lss), concat_rows(dms), concat_rows(lds),
            slice_rows(noise.eps, 0, T), slice_rows(noise.xi, 0, T), concat_rows(zs)};
}

// Parallel sampler: z_t ~ v_t + sum_{i<t} u_i with
//   v_t = ctx_{t-1} W_mu2 + dmu_t + eps_t + (ctx_{t-1} W_sigma2 + log dsigma2_t) * eps_t
//   u_t = v_t W_mu1 + (v_t W_sigma1) * xi_t
// computed for all t at once; the prefix sum is a product with a strictly
// lower-triangular ones matrix. Prior parameters for the KL are then
// evaluated in one batch at the shifted samples.
inline LatentTrajectory sample_parallel(const LatentHeads &heads, const SegmentReprs &reprs, SampleMode mode,
                                        const Noise &noise) {
    detail::check_sampler_inputs(heads, reprs, noise);
    const std::size_t T = reprs.num_segments(), l = heads.latent_dim();
    const Tensor ctx_prev = detail::shifted_context(reprs.context);
    const Tensor eps = slice_rows(noise.eps, 0, T);
    const Tensor xi = slice_rows(noise.xi, 0, T);

    GaussianParams d = mode == SampleMode::posterior ? posterior_delta(heads.posterior, reprs.local)
                                                     : standard_normal_params(T, l);
    Tensor mean_part = add(matmul(ctx_prev, heads.prior.w_mu2), d.mu);
    Tensor scale_part = add(matmul(ctx_prev, heads.prior.w_sigma2), d.log_sigma2);
    Tensor v = add(add(mean_part, eps), mul(scale_part, eps));
    Tensor u = add(matmul(v, heads.prior.w_mu1), mul(matmul(v, heads.prior.w_sigma1), xi));
    Tensor z = add(v, matmul(strict_lower_ones(T), u));

    Tensor z_prev = T == 1 ? Tensor(1, l) : concat_rows({Tensor(1, l), slice_rows(z, 0, T - 1)});
    GaussianParams p = prior_params(heads.prior, z_prev, ctx_prev);
    return {p.mu, p.log_sigma2, d.mu, d.log_sigma2, eps, xi, z};
}

// log N(z; mean, diag(exp(log_var))) summed over a row.
inline double gaussian_log_density(std::span<const double> z, std::span<const double> mean, std::span<const double> log_var) {
    constexpr double log2pi = 1.8378770664093454836;
    double s = 0.0;
    for (std::size_t d = 0; d < z.size(); ++d) {
        const double diff = z[d] - mean[d];
        s += log2pi + log_var[d] + diff * diff / std::exp(log_var[d]);
    }
    return -0.5 * s;
}

} // namespace tracevae
