#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracevae/objectives.hpp"

namespace tracevae {

enum class Strategy { greedy, top_k, beam };

inline Strategy parse_strategy(const std::string &s) {
    if (s == "greedy") return Strategy::greedy;
    if (s == "topk" || s == "top_k") return Strategy::top_k;
    if (s == "beam") return Strategy::beam;
    throw std::invalid_argument("unknown strategy '" + s + "' (expected greedy|topk|beam)");
}

inline std::string to_string(Strategy s) {
    switch (s) {
    case Strategy::greedy: return "greedy";
    case Strategy::top_k: return "topk";
    case Strategy::beam: return "beam";
    }
    return "?";
}

struct GenerateOptions {
    Strategy strategy = Strategy::greedy;
    long top_k = 50;
    long beam_size = 10;
    std::size_t max_len = 0; // tokens including SEPs; 0 means backbone max_len - 1

    void validate() const {
        if (strategy == Strategy::top_k && top_k <= 0) throw std::invalid_argument("generate: top_k must be positive");
        if (strategy == Strategy::beam && beam_size <= 0) throw std::invalid_argument("generate: beam_size must be positive");
    }
};

struct Generated {
    std::vector<TokenId> ids; // SEP-closed segments, prompt included
    std::size_t prompt_length = 0;
    bool ended_with_eos = false;
    double log_prob = 0.0; // decoder log-probability of the emitted continuation
    std::vector<std::vector<double>> latents;

    std::vector<TokenId> continuation() const { return {ids.begin() + static_cast<long>(prompt_length), ids.end()}; }
};

namespace detail {

// Partial output with its latent chain; the last latent belongs to the
// open segment.
struct Hypothesis {
    std::vector<TokenId> ids;
    std::vector<std::vector<double>> latents;
    std::size_t open_tokens = 0;
    double log_prob = 0.0;
    bool done = false;
    bool eos = false;
};

inline std::vector<double> draw_gaussian(const std::vector<double> &mu, const std::vector<double> &log_var,
                                         RngStream &rng) {
    std::vector<double> z(mu.size());
    for (std::size_t d = 0; d < z.size(); ++d) z[d] = mu[d] + std::exp(0.5 * log_var[d]) * rng.normal();
    return z;
}

// Extra-mask representation at the last SEP of `ids` (all segments closed).
inline Tensor last_context(const TraceModel &model, const std::vector<TokenId> &ids) {
    SegmentedSequence seq = from_separated(ids);
    const Tensor hx = model.backbone().encode(seq.ids, build_masks(seq).extra);
    return slice_rows(hx, seq.sep_positions.back(), 1);
}

// Prior draw for the segment that follows the closed prefix `ids`.
inline std::vector<double> next_latent(const TraceModel &model, const std::vector<TokenId> &ids,
                                       const std::vector<std::vector<double>> &latents, RngStream &rng) {
    const std::size_t l = model.latent_dim();
    const std::vector<double> zero(l, 0.0);
    const Paradigm p = model.config().paradigm;
    if (latents.empty() || p == Paradigm::ind) return draw_gaussian(zero, zero, rng);
    if (p == Paradigm::single) return latents.back();
    const Tensor ctx = last_context(model, ids);
    const Tensor z_prev = p == Paradigm::rgd ? Tensor(1, l, latents.back()) : Tensor(1, l);
    const GaussianParams g = prior_params(model.heads().prior, z_prev, ctx);
    return draw_gaussian(g.mu.row_values(0), g.log_sigma2.row_values(0), rng);
}

// Next-token log-probabilities after `h.ids`, with tokens that cannot be
// emitted set to -inf.
inline std::vector<double> next_log_probs(const TraceModel &model, const Hypothesis &h) {
    const std::size_t n = h.ids.size() + 1;
    std::vector<TokenId> inputs{kBos};
    inputs.insert(inputs.end(), h.ids.begin(), h.ids.end());
    std::vector<std::size_t> rows(n);
    std::size_t seg = 0;
    for (std::size_t i = 0; i < h.ids.size(); ++i) {
        rows[i] = seg;
        if (h.ids[i] == kSep) ++seg;
    }
    rows[n - 1] = h.latents.size() - 1;
    std::vector<double> flat;
    for (const auto &z : h.latents) flat.insert(flat.end(), z.begin(), z.end());
    const Tensor lat(h.latents.size(), model.latent_dim(), flat);
    const Tensor logits = model.backbone().decode(inputs, gather_rows(lat, rows));
    std::vector<double> lp = log_softmax_rows(slice_rows(logits, n - 1, 1)).row_values(0);
    const double ninf = -std::numeric_limits<double>::infinity();
    lp[kPad] = ninf;
    lp[kBos] = ninf;
    lp[kUnk] = ninf;
    if (h.open_tokens == 0) lp[kSep] = ninf;
    if (h.ids.empty()) lp[kEos] = ninf;
    return lp;
}

// Appends `tok`, closing the segment on EOS or when only the closing SEP
// still fits, and draws the next latent after a SEP that continues the
// sequence. `max_tokens` bounds ids.size().
inline void advance(const TraceModel &model, Hypothesis &h, TokenId tok, double lp, std::size_t max_tokens,
                    RngStream &rng) {
    h.log_prob += lp;
    if (tok == kEos) {
        if (h.open_tokens > 0) h.ids.push_back(kSep);
        h.open_tokens = 0;
        h.done = h.eos = true;
        return;
    }
    h.ids.push_back(tok);
    if (tok != kSep) {
        ++h.open_tokens;
        if (h.ids.size() + 1 >= max_tokens) {
            h.ids.push_back(kSep);
            h.open_tokens = 0;
            h.done = true;
        }
        return;
    }
    h.open_tokens = 0;
    if (h.ids.size() + 2 > max_tokens) {
        h.done = true;
        return;
    }
    h.latents.push_back(next_latent(model, h.ids, h.latents, rng));
}

inline TokenId argmax_token(const std::vector<double> &lp) {
    return static_cast<TokenId>(std::max_element(lp.begin(), lp.end()) - lp.begin());
}

inline TokenId sample_top_k(const std::vector<double> &lp, std::size_t k, RngStream &rng) {
    std::vector<TokenId> order(lp.size());
    std::iota(order.begin(), order.end(), TokenId{0});
    std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return lp[a] > lp[b]; });
    std::size_t keep = 0;
    while (keep < std::min(k, order.size()) && std::isfinite(lp[order[keep]])) ++keep;
    double total = 0.0;
    for (std::size_t i = 0; i < keep; ++i) total += std::exp(lp[order[i]] - lp[order[0]]);
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < keep; ++i) {
        u -= std::exp(lp[order[i]] - lp[order[0]]);
        if (u <= 0.0) return order[i];
    }
    return order[keep - 1];
}

} // namespace detail

// Autoregressive generation. Latents for the prompt come from the
// posterior; every later segment draws its latent from the prior once the
// preceding SEP is emitted.
inline Generated generate(const TraceModel &model, const GenerateOptions &opt, RngStream &rng,
                          const std::vector<TokenId> &prompt = {}, const SegmentPolicy &prompt_policy = SegmentPolicy::fixed(10)) {
    opt.validate();
    NoGradGuard ng;
    // The decoder sees [BOS] + ids, so ids may hold max_len - 1 tokens.
    const std::size_t cap = model.config().backbone.max_len - 1;
    const std::size_t limit = opt.max_len == 0 ? cap : std::min(cap, opt.max_len);
    if (limit < 2) throw std::invalid_argument("generate: max_len too small");

    detail::Hypothesis start;
    if (!prompt.empty()) {
        const SegmentedSequence seq = segment(prompt, prompt_policy);
        if (seq.length() + 2 > limit) throw std::invalid_argument("generate: prompt leaves no room to generate");
        RngStreams streams = RngStreams::from_seed(rng.next_u64());
        const Noise noise = Noise::draw(seq.num_segments(), model.latent_dim(), streams);
        const LatentPlan plan = infer_latents(model, seq, model.config().paradigm, noise, false);
        start.ids = seq.ids;
        for (std::size_t t = 0; t < seq.num_segments(); ++t) start.latents.push_back(plan.latents.row_values(t));
    }
    start.latents.push_back(detail::next_latent(model, start.ids, start.latents, rng));
    const std::size_t prompt_length = start.ids.size();

    auto finish = [&](const detail::Hypothesis &h) {
        Generated g;
        g.ids = h.ids;
        g.prompt_length = prompt_length;
        g.ended_with_eos = h.eos;
        g.log_prob = h.log_prob;
        g.latents = h.latents;
        if (g.latents.size() > from_separated(g.ids).num_segments()) g.latents.pop_back();
        return g;
    };

    if (opt.strategy != Strategy::beam) {
        detail::Hypothesis h = start;
        while (!h.done) {
            const auto lp = detail::next_log_probs(model, h);
            const TokenId tok = opt.strategy == Strategy::greedy
                                    ? detail::argmax_token(lp)
                                    : detail::sample_top_k(lp, static_cast<std::size_t>(opt.top_k), rng);
            detail::advance(model, h, tok, lp[tok], limit, rng);
        }
        return finish(h);
    }

    const std::size_t b = static_cast<std::size_t>(opt.beam_size);
    std::vector<detail::Hypothesis> beams{start};
    while (std::any_of(beams.begin(), beams.end(), [](const auto &h) { return !h.done; })) {
        struct Cand {
            double score;
            std::size_t beam;
            TokenId tok;
            double lp;
        };
        std::vector<Cand> cands;
        for (std::size_t i = 0; i < beams.size(); ++i) {
            if (beams[i].done) {
                cands.push_back({beams[i].log_prob, i, kPad, 0.0});
                continue;
            }
            const auto lp = detail::next_log_probs(model, beams[i]);
            for (TokenId t = 0; t < lp.size(); ++t)
                if (std::isfinite(lp[t])) cands.push_back({beams[i].log_prob + lp[t], i, t, lp[t]});
        }
        std::stable_sort(cands.begin(), cands.end(), [](const Cand &a, const Cand &c) { return a.score > c.score; });
        cands.resize(std::min(cands.size(), b));
        std::vector<detail::Hypothesis> next;
        for (const auto &c : cands) {
            detail::Hypothesis h = beams[c.beam];
            if (!h.done) detail::advance(model, h, c.tok, c.lp, limit, rng);
            next.push_back(std::move(h));
        }
        beams = std::move(next);
    }
    return finish(beams.front());
}

} // namespace tracevae
