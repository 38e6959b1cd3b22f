#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "tracevae/objectives.hpp"

namespace tracevae {

inline double log_sum_exp(std::span<const double> xs) {
    if (xs.empty()) return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

inline double log_mean_exp(std::span<const double> xs) {
    return log_sum_exp(xs) - std::log(static_cast<double>(xs.size()));
}

struct IwEstimate {
    std::size_t n = 0;
    double log_px_hat = 0.0;
    double ppl = 0.0;
    std::size_t tokens = 0;
    std::vector<double> log_weights;
};

// log p(x | z) + sum_t [log p(z_t | .) - log q(z_t | .)] for one sampled
// trajectory.
inline double trajectory_log_weight(const TraceModel &model, const SegmentedSequence &seq, const LatentPlan &plan) {
    const auto &tr = plan.trajectory;
    double w = sum(token_log_likelihoods(model, seq, plan.latents)).item();
    const Tensor qm = tr.posterior_mean(), qv = tr.posterior_log_var();
    for (std::size_t t = 0; t < tr.num_segments(); ++t) {
        const auto z = tr.z.row_values(t);
        w += gaussian_log_density(z, tr.mu.row_values(t), tr.log_sigma2.row_values(t));
        w -= gaussian_log_density(z, qm.row_values(t), qv.row_values(t));
    }
    return w;
}

// Importance-weighted estimate of log p(x) from n posterior trajectories,
// sampled with the exact sequential chain.
inline IwEstimate iw_nll(const TraceModel &model, const SegmentedSequence &seq, std::size_t n, RngStreams &rng) {
    if (n == 0) throw std::invalid_argument("iw_nll: need at least one sample");
    NoGradGuard ng;
    const Paradigm paradigm = model.config().paradigm;
    const EncodedSequence enc = encode_for(model, seq, paradigm);
    IwEstimate est;
    est.n = n;
    est.tokens = seq.length() + 1;
    est.log_weights.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Noise noise = Noise::draw(seq.num_segments(), model.latent_dim(), rng);
        est.log_weights.push_back(trajectory_log_weight(model, seq, infer_latents(model, enc, paradigm, noise, false)));
    }
    est.log_px_hat = log_mean_exp(est.log_weights);
    est.ppl = std::exp(-est.log_px_hat / static_cast<double>(est.tokens));
    return est;
}

struct DiagonalGaussians {
    std::vector<std::vector<double>> means;
    std::vector<std::vector<double>> log_vars;

    std::size_t size() const { return means.size(); }
};

// E_i E_{z ~ q_i} [log q_i(z) - log (1/N) sum_j q_j(z)], the aggregate
// posterior taken as the uniform mixture of the N components.
inline double mutual_information(const DiagonalGaussians &q, std::size_t samples, RngStream &rng) {
    const std::size_t N = q.size();
    if (N < 2) throw std::invalid_argument("mutual_information: need at least 2 posteriors");
    if (q.log_vars.size() != N) throw std::invalid_argument("mutual_information: means and variances differ in count");
    if (samples == 0) throw std::invalid_argument("mutual_information: need at least one sample");
    const std::size_t l = q.means[0].size();
    std::vector<double> z(l), dens(N);
    double acc = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t s = 0; s < samples; ++s) {
            for (std::size_t d = 0; d < l; ++d) z[d] = q.means[i][d] + std::exp(0.5 * q.log_vars[i][d]) * rng.normal();
            for (std::size_t j = 0; j < N; ++j) dens[j] = gaussian_log_density(z, q.means[j], q.log_vars[j]);
            acc += dens[i] - log_mean_exp(dens);
        }
    }
    return acc / static_cast<double>(N * samples);
}

// Posterior Gaussians of every (sequence, segment) pair, one sampled chain
// per sequence.
inline DiagonalGaussians pooled_posteriors(const TraceModel &model, std::span<const SegmentedSequence> data,
                                           RngStreams &rng, bool mean_chain = false) {
    NoGradGuard ng;
    DiagonalGaussians out;
    const Paradigm p = model.config().paradigm;
    for (const auto &seq : data) {
        const Noise noise = mean_chain ? Noise::zeros(seq.num_segments(), model.latent_dim())
                                       : Noise::draw(seq.num_segments(), model.latent_dim(), rng);
        const auto plan = infer_latents(model, seq, p, noise, false);
        const Tensor m = plan.trajectory.posterior_mean(), v = plan.trajectory.posterior_log_var();
        for (std::size_t t = 0; t < m.rows(); ++t) {
            out.means.push_back(m.row_values(t));
            out.log_vars.push_back(v.row_values(t));
        }
    }
    return out;
}

// Minibatch estimator over `data`, averaged across batches of `batch`
// sequences (a short final batch is merged into the previous one).
inline double mutual_information(const TraceModel &model, std::span<const SegmentedSequence> data, std::size_t batch,
                                 RngStreams &rng, std::size_t samples = 1) {
    if (batch < 2) throw std::invalid_argument("mutual_information: batch must be >= 2");
    if (data.size() < 2) throw std::invalid_argument("mutual_information: need at least 2 sequences");
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < data.size();) {
        std::size_t end = std::min(data.size(), start + batch);
        if (data.size() - end < 2) end = data.size();
        auto q = pooled_posteriors(model, data.subspan(start, end - start), rng);
        if (q.size() >= 2) {
            total += mutual_information(q, samples, rng.eps);
            ++batches;
        }
        start = end;
    }
    return total / static_cast<double>(batches);
}

// Latent dimensions whose posterior mean varies across rows by more than
// delta (unbiased variance).
inline std::size_t active_units(const std::vector<std::vector<double>> &means, double delta,
                                std::vector<double> *variances = nullptr) {
    const std::size_t N = means.size();
    if (N < 2) throw std::invalid_argument("active_units: need at least 2 data points");
    const std::size_t l = means[0].size();
    std::vector<double> var(l, 0.0);
    std::size_t active = 0;
    for (std::size_t d = 0; d < l; ++d) {
        double m = 0.0;
        for (const auto &row : means) m += row[d];
        m /= static_cast<double>(N);
        double s = 0.0;
        for (const auto &row : means) s += (row[d] - m) * (row[d] - m);
        var[d] = s / static_cast<double>(N - 1);
        if (var[d] > delta) ++active;
    }
    if (variances) *variances = std::move(var);
    return active;
}

inline std::size_t active_units(const TraceModel &model, std::span<const SegmentedSequence> data, double delta = 0.1,
                                std::vector<double> *variances = nullptr) {
    RngStreams unused = RngStreams::from_seed(0);
    return active_units(pooled_posteriors(model, data, unused, true).means, delta, variances);
}

} // namespace tracevae
