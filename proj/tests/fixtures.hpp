#pragma once

#include <cmath>
#include <vector>

#include "tracevae/model.hpp"
#include "tracevae/objectives.hpp"
#include "tracevae/rng.hpp"
#include "tracevae/segment.hpp"

namespace fixture {

inline tracevae::ModelConfig tiny_config(std::size_t vocab = 12, std::size_t h = 8, std::size_t l = 4,
                                         std::uint64_t seed = 7) {
    tracevae::ModelConfig cfg;
    cfg.backbone.layers = 1;
    cfg.backbone.heads = 2;
    cfg.backbone.model_dim = h;
    cfg.backbone.ffn_dim = 2 * h;
    cfg.backbone.max_len = 64;
    cfg.backbone.vocab_size = vocab;
    cfg.latent.latent_dim = l;
    cfg.seed = seed;
    return cfg;
}

inline std::vector<tracevae::TokenId> random_ids(std::size_t n, std::size_t vocab, tracevae::RngStream &rng) {
    std::vector<tracevae::TokenId> ids(n);
    for (auto &t : ids) t = static_cast<tracevae::TokenId>(tracevae::kNumReserved + rng.below(vocab - tracevae::kNumReserved));
    return ids;
}

// Re-draws every parameter, for tests that need latents to matter.
inline void scramble(tracevae::TraceModel &m, double stddev, std::uint64_t seed) {
    tracevae::RngStream rng(seed);
    for (const auto &[name, t] : m.params().entries()) {
        tracevae::Tensor h = t;
        for (double &v : h.mutable_values()) v = stddev * rng.normal();
    }
}

// One latent dimension, two symbols, one segment: small enough that
// log p(x) can be integrated over z directly.
inline tracevae::TraceModel iw_toy_model(std::uint64_t seed = 11) {
    auto cfg = tiny_config(tracevae::kNumReserved + 2, 8, 1, seed);
    cfg.backbone.max_len = 8;
    cfg.latent.gamma = 1.0;
    tracevae::TraceModel m(cfg);
    scramble(m, 0.6, seed + 1);
    return m;
}

inline tracevae::SegmentedSequence iw_toy_sequence() {
    const tracevae::TokenId a = tracevae::kNumReserved, b = a + 1;
    return tracevae::segment({a, b, b, a}, tracevae::SegmentPolicy::fixed(10));
}

// log p(x | z) with every latent coordinate set to z.
inline double iw_toy_loglik(const tracevae::TraceModel &m, const tracevae::SegmentedSequence &s, double z) {
    tracevae::NoGradGuard ng;
    const std::size_t n = s.num_segments() * m.latent_dim();
    const tracevae::Tensor zs(s.num_segments(), m.latent_dim(), std::vector<double>(n, z));
    return tracevae::sum(tracevae::token_log_likelihoods(m, s, zs)).item();
}

} // namespace fixture
