#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "tracevae/latent.hpp"
#include "tracevae/model.hpp"
#include "tracevae/segment.hpp"

namespace tracevae {

// A sampled latent chain plus the rows the decoder consumes (T x l; for
// the single-latent paradigm every row is the same z).
struct LatentPlan {
    LatentTrajectory trajectory;
    Tensor latents;
};

// Encoder outputs a paradigm needs; computed once and reusable across
// latent draws.
struct EncodedSequence {
    SegmentReprs reprs; // unset for the single-latent paradigm
    Tensor full;        // 1 x h whole-sequence representation, cgd/single only
    std::size_t num_segments = 0;
};

inline EncodedSequence encode_for(const TraceModel &model, const SegmentedSequence &seq, Paradigm paradigm) {
    const auto &bb = model.backbone();
    EncodedSequence enc;
    enc.num_segments = seq.num_segments();
    if (paradigm != Paradigm::single) enc.reprs = bb.encode_dual(seq, build_masks(seq));
    if (paradigm == Paradigm::cgd || paradigm == Paradigm::single) enc.full = bb.encode_full(seq);
    return enc;
}

// Samples latents under `paradigm`. For RGD, `parallel` picks the parallel
// approximation; otherwise the exact sequential chain is used.
inline LatentPlan infer_latents(const TraceModel &model, const EncodedSequence &enc, Paradigm paradigm,
                                const Noise &noise, bool parallel, SampleMode mode = SampleMode::posterior) {
    const auto &heads = model.heads();
    const std::size_t T = enc.num_segments, l = model.latent_dim();
    const bool post = mode == SampleMode::posterior;

    // Reparameterized draw for the non-recurrent paradigms.
    auto draw = [&](GaussianParams p, GaussianParams d, std::size_t rows) {
        if (noise.eps.rows() < rows || noise.eps.cols() != l) throw ShapeError("infer_latents: noise too small");
        Tensor eps = slice_rows(noise.eps, 0, rows);
        Tensor xi = slice_rows(noise.xi, 0, rows);
        Tensor z = add(add(p.mu, d.mu), mul(exp(scale(add(p.log_sigma2, d.log_sigma2), 0.5)), eps));
        return LatentTrajectory{p.mu, p.log_sigma2, d.mu, d.log_sigma2, eps, xi, z};
    };

    switch (paradigm) {
    case Paradigm::rgd: {
        LatentTrajectory tr = parallel ? sample_parallel(heads, enc.reprs, mode, noise)
                                       : sample_sequential(heads, enc.reprs, mode, noise);
        Tensor z = tr.z;
        return {std::move(tr), z};
    }
    case Paradigm::ind: {
        GaussianParams d = post ? posterior_delta(heads.posterior, add(enc.reprs.context, enc.reprs.local))
                                : standard_normal_params(T, l);
        LatentTrajectory tr = draw(standard_normal_params(T, l), d, T);
        Tensor z = tr.z;
        return {std::move(tr), z};
    }
    case Paradigm::cgd: {
        const Tensor ctx_prev = detail::shifted_context(enc.reprs.context);
        GaussianParams p = prior_params(heads.prior, Tensor(T, l), ctx_prev);
        GaussianParams d = post ? posterior_delta(heads.posterior, add(enc.reprs.local, enc.full))
                                : standard_normal_params(T, l);
        LatentTrajectory tr = draw(p, d, T);
        Tensor z = tr.z;
        return {std::move(tr), z};
    }
    case Paradigm::single: {
        GaussianParams d = post ? posterior_delta(heads.posterior, enc.full) : standard_normal_params(1, l);
        LatentTrajectory tr = draw(standard_normal_params(1, l), d, 1);
        const std::vector<std::size_t> same(T, 0);
        Tensor z = gather_rows(tr.z, same);
        return {std::move(tr), z};
    }
    }
    throw std::invalid_argument("infer_latents: unknown paradigm");
}

inline LatentPlan infer_latents(const TraceModel &model, const SegmentedSequence &seq, Paradigm paradigm,
                                const Noise &noise, bool parallel, SampleMode mode = SampleMode::posterior) {
    return infer_latents(model, encode_for(model, seq, paradigm), paradigm, noise, parallel, mode);
}

struct ElboReport {
    Tensor objective_tensor; // differentiable root
    double recon = 0.0;      // sum of token log-likelihoods (nats)
    std::vector<double> kl_per_segment;
    double kl_total = 0.0;
    double anneal_weight = 1.0;
    double objective = 0.0; // -recon + anneal_weight * kl_total
    std::size_t tokens = 0;
    double sigma2_max = 1.0; // largest prior variance on the chain
    LatentTrajectory trajectory;
    Tensor latents;
};

// Token log-likelihood of seq + [EOS] under teacher forcing, n x 1 rows.
inline Tensor token_log_likelihoods(const TraceModel &model, const SegmentedSequence &seq, const Tensor &latents) {
    const Tensor logits = model.backbone().decode_logits(seq, latents);
    const auto targets = Backbone::decoder_targets(seq);
    return pick(log_softmax_rows(logits), targets);
}

inline ElboReport elbo(const TraceModel &model, const SegmentedSequence &seq, Paradigm paradigm, double anneal_weight,
                       const Noise &noise) {
    if (anneal_weight < 0.0 || anneal_weight > 1.0) throw std::invalid_argument("elbo: anneal weight outside [0, 1]");
    LatentPlan plan = infer_latents(model, seq, paradigm, noise, model.config().latent.parallel);
    const auto &tr = plan.trajectory;

    Tensor recon = sum(token_log_likelihoods(model, seq, plan.latents));
    Tensor kls = kl_rows(tr.log_sigma2, tr.delta_mu, tr.log_delta_sigma2);
    Tensor kl_total = sum(kls);
    Tensor objective = add(scale(recon, -1.0), scale(kl_total, anneal_weight));

    ElboReport rep;
    rep.recon = recon.item();
    rep.kl_per_segment.assign(kls.values().begin(), kls.values().end());
    rep.kl_total = kl_total.item();
    rep.anneal_weight = anneal_weight;
    rep.objective = objective.item();
    rep.objective_tensor = objective;
    rep.tokens = seq.length() + 1;
    double ls_max = 0.0;
    for (double v : tr.log_sigma2.values()) ls_max = std::max(ls_max, v);
    rep.sigma2_max = std::exp(ls_max);
    rep.trajectory = tr;
    rep.latents = plan.latents;
    return rep;
}

inline ElboReport elbo(const TraceModel &model, const SegmentedSequence &seq, double anneal_weight, const Noise &noise) {
    return elbo(model, seq, model.config().paradigm, anneal_weight, noise);
}

// Cyclical sawtooth: linear ramp over the first `ramp_fraction` of each
// cycle, then flat at 1.
inline double anneal_weight(std::size_t step, std::size_t cycle_len, double ramp_fraction) {
    if (cycle_len < 2) throw std::invalid_argument("anneal_weight: cycle length must be >= 2");
    if (!(ramp_fraction > 0.0 && ramp_fraction <= 1.0)) throw std::invalid_argument("anneal_weight: ramp fraction outside (0, 1]");
    const double p = static_cast<double>(step % cycle_len) / static_cast<double>(cycle_len);
    return std::min(1.0, p / ramp_fraction);
}

} // namespace tracevae
