#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "tracevae/grad_check.hpp"
#include "tracevae/metrics.hpp"
#include "tracevae/ngram.hpp"
#include "tracevae/normalization.hpp"
#include "tracevae/objectives.hpp"
#include "tracevae/reference.hpp"

namespace tracevae {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string observed;
    std::string expected;
};

struct VerifyOptions {
    std::uint64_t seed = 1;
    // Negative control: leave the perturbed recurrent blocks unnormalized.
    bool skip_spectral_norm = false;
};

inline const char *kVerifyHeader = "# check\tstatus\tobserved\texpected";

inline std::string format_check(const CheckResult &r) {
    return r.name + '\t' + (r.passed ? "PASS" : "FAIL") + '\t' + r.observed + '\t' + r.expected;
}

namespace detail {

inline std::string num(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

inline void overwrite(Tensor t, const std::vector<double> &v) {
    auto d = t.mutable_values();
    std::copy(v.begin(), v.end(), d.begin());
}

inline void randomize(Tensor t, RngStream &rng, double s) {
    for (double &v : t.mutable_values()) v = s * rng.normal();
}

inline ModelConfig verify_model_config(std::size_t l, std::uint64_t seed) {
    ModelConfig cfg;
    cfg.backbone.layers = 1;
    cfg.backbone.heads = 1;
    cfg.backbone.model_dim = 4;
    cfg.backbone.ffn_dim = 8;
    cfg.backbone.max_len = 9;
    cfg.backbone.vocab_size = 7;
    cfg.latent.latent_dim = l;
    cfg.latent.gamma = 1.0;
    cfg.seed = seed;
    return cfg;
}

inline CheckResult check_gradients(std::uint64_t seed) {
    TraceModel m(verify_model_config(2, seed));
    const auto s = segment({5, 6, 6, 5, 5}, SegmentPolicy::fixed(2));
    auto streams = RngStreams::from_seed(seed + 5);
    const Noise n = Noise::draw(s.num_segments(), 2, streams);
    std::vector<NamedTensor> params(m.params().entries().begin(), m.params().entries().end());
    double worst = 0.0;
    for (auto p : {Paradigm::rgd, Paradigm::ind, Paradigm::cgd, Paradigm::single}) {
        const auto rep = finite_difference_check([&] { return elbo(m, s, p, 1.0, n).objective_tensor; }, params, 1e-4);
        worst = std::max(worst, rep.max_scaled_error);
    }
    return {"gradient_fd", worst <= 1e-6, "max |analytic-numeric| / max|grad| = " + num(worst), "<= 1e-6"};
}

inline CheckResult check_layer_norm(RngStream &rng) {
    double worst = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t k = 2 + rng.below(63);
        const double gamma = 4.0 * rng.uniform() - 2.0, beta = 4.0 * rng.uniform() - 2.0;
        Tensor x(1, k);
        for (double &v : x.mutable_values()) v = 6.0 * rng.normal();
        const Tensor y = layer_norm(x, gamma, beta, 0.0);
        double s = 0.0;
        for (double v : y.values()) s += v * v;
        const double want = static_cast<double>(k) * (gamma * gamma + beta * beta);
        worst = std::max(worst, std::abs(s - want) / want);
    }
    return {"layer_norm_identity", worst <= 1e-9, "max relative error " + num(worst), "<= 1e-9"};
}

inline CheckResult check_kl_floor(RngStream &rng) {
    std::size_t violations = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t l = 1 + rng.below(8);
        std::vector<double> mu(l), ls(l), dm(l), ld(l);
        double mean_part = 0.0;
        for (std::size_t d = 0; d < l; ++d) {
            mu[d] = rng.normal();
            ls[d] = -std::abs(rng.normal());
            dm[d] = 2.0 * rng.normal();
            ld[d] = rng.normal();
            mean_part += 0.5 * dm[d] * dm[d] / std::exp(ls[d]);
        }
        if (kl_term(mu, ls, dm, ld) < mean_part) ++violations;
    }
    return {"kl_floor", violations == 0, std::to_string(violations) + " violations", "0"};
}

inline CheckResult check_parallel_exact(RngStream &rng) {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t l = 1 + rng.below(8), T = 1 + rng.below(16), h = 6;
        LatentConfig lc;
        lc.latent_dim = l;
        ParamStore store;
        auto heads = make_latent_heads(lc, h, store, rng);
        overwrite(heads.prior.w_sigma1, std::vector<double>(l * l, 0.0));
        overwrite(heads.prior.w_mu1, reference::random_projection(l, rng));
        randomize(heads.prior.w_mu2, rng, 0.3);
        randomize(heads.prior.w_sigma2, rng, 0.1);
        SegmentReprs r{Tensor(T, h), Tensor(T, h)};
        randomize(r.context, rng, 1.0);
        randomize(r.local, rng, 1.0);
        auto streams = RngStreams::from_seed(rng.next_u64());
        const Noise n = Noise::draw(T, l, streams);
        NoGradGuard ng;
        const auto p = sample_parallel(heads, r, SampleMode::posterior, n);
        const auto s = sample_sequential(heads, r, SampleMode::posterior, n, SigmaPath::linearized);
        for (std::size_t i = 0; i < p.z.size(); ++i) worst = std::max(worst, std::abs(p.z.values()[i] - s.z.values()[i]));
    }
    return {"parallel_exact", worst <= 1e-9, "max |z_par - z_seq| = " + num(worst), "<= 1e-9"};
}

// `second_gap` receives the largest |E z_T^2| difference between samplers.
inline CheckResult check_parallel_moments(RngStream &rng, int draws = 20000, double *second_gap = nullptr) {
    const std::size_t l = 3, h = 4, T = 4;
    LatentConfig lc;
    lc.latent_dim = l;
    lc.gamma = 1.0;
    ParamStore store;
    auto heads = make_latent_heads(lc, h, store, rng);
    overwrite(heads.prior.w_mu1, reference::random_projection(l, rng));
    randomize(heads.prior.w_sigma1, rng, 1.0);
    spectral_normalize_inplace(heads.prior.w_sigma1);
    for (double &v : heads.prior.w_sigma1.mutable_values()) v *= 0.1;
    randomize(heads.prior.w_mu2, rng, 0.3);
    randomize(heads.prior.w_sigma2, rng, 0.05);
    SegmentReprs r{Tensor(T, h), Tensor(T, h)};
    randomize(r.context, rng, 1.0);
    randomize(r.local, rng, 1.0);
    auto sa = RngStreams::from_seed(rng.next_u64()), sb = RngStreams::from_seed(rng.next_u64());
    const int N = draws;
    std::vector<double> mp(l, 0.0), ms(l, 0.0), qp(l, 0.0), qs(l, 0.0);
    NoGradGuard ng;
    for (int k = 0; k < N; ++k) {
        const auto p = sample_parallel(heads, r, SampleMode::posterior, Noise::draw(T, l, sa));
        const auto s = sample_sequential(heads, r, SampleMode::posterior, Noise::draw(T, l, sb));
        for (std::size_t j = 0; j < l; ++j) {
            mp[j] += p.z(T - 1, j);
            qp[j] += p.z(T - 1, j) * p.z(T - 1, j);
            ms[j] += s.z(T - 1, j);
            qs[j] += s.z(T - 1, j) * s.z(T - 1, j);
        }
    }
    double worst = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
        const double ap = mp[j] / N, as = ms[j] / N;
        const double se = std::sqrt((qp[j] / N - ap * ap) / N + (qs[j] / N - as * as) / N);
        worst = std::max(worst, std::abs(ap - as) / se);
    }
    if (second_gap) {
        *second_gap = 0.0;
        for (std::size_t j = 0; j < l; ++j) *second_gap = std::max(*second_gap, std::abs(qp[j] - qs[j]) / N);
    }
    return {"parallel_moments", worst <= 4.0, "max |mean gap| / se = " + num(worst), "<= 4"};
}

inline CheckResult check_masks(RngStream &rng) {
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<TokenId> ids(1 + rng.below(40));
        for (auto &t : ids) t = static_cast<TokenId>(kNumReserved + rng.below(9));
        const auto s = segment(ids, SegmentPolicy::fixed(1 + rng.below(10)));
        const auto seg = reference::membership({s.ids.begin(), s.ids.end()}, static_cast<int>(kSep));
        const auto m = build_masks(s);
        for (std::size_t i = 0; i < s.length(); ++i)
            for (std::size_t j = 0; j < s.length(); ++j)
                if (m.extra(i, j) != (seg[j] <= seg[i]) || m.intra(i, j) != (seg[j] == seg[i])) ++mismatches;
    }
    return {"mask_oracle", mismatches == 0, std::to_string(mismatches) + " mismatches", "0"};
}

inline CheckResult check_spectral(std::uint64_t seed, bool skip) {
    ModelConfig cfg = verify_model_config(5, seed);
    cfg.latent.use_spectral_norm = true;
    TraceModel m(cfg);
    RngStream rng(seed + 9);
    randomize(m.heads().prior.w_mu1, rng, 3.0);
    randomize(m.heads().prior.w_sigma1, rng, 3.0);
    if (!skip) m.apply_spectral_norm();
    const auto &p = m.heads().prior;
    const double s1 = reference::sigma_max({p.w_mu1.values().begin(), p.w_mu1.values().end()}, 5, 5);
    const double s2 = reference::sigma_max({p.w_sigma1.values().begin(), p.w_sigma1.values().end()}, 5, 5);
    const double worst = std::max(s1, s2);
    return {"spectral_bound", worst <= 1.0 + 1e-3, "max sigma_max = " + num(worst), "<= 1.001"};
}

inline CheckResult check_metrics(RngStream &rng) {
    static const char *kWords[] = {"a", "b", "c", "d", "e"};
    auto corpus = [&] {
        std::vector<Tokens> out(1 + rng.below(5));
        for (auto &s : out) {
            s.resize(1 + rng.below(8));
            for (auto &w : s) w = kWords[rng.below(5)];
        }
        return out;
    };
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto c = corpus(), refs = corpus();
        mismatches += distinct_n(c, 1) != reference::dist(c, 1);
        mismatches += distinct_n(c, 2) != reference::dist(c, 2);
        if (c.size() >= 2) {
            mismatches += self_bleu(c) != reference::self_bleu(c);
            mismatches += mean_pairwise_jaccard(c) != reference::jaccard(c);
        }
        for (const auto &s : c) {
            mismatches += sentence_bleu(s, refs) != reference::bleu(s, refs);
            mismatches += rouge_n(s, refs, 1) != reference::rouge_n(s, refs, 1);
            mismatches += rouge_n(s, refs, 2) != reference::rouge_n(s, refs, 2);
            mismatches += rouge_l(s, refs) != reference::rouge_l(s, refs);
        }
    }
    std::vector<std::vector<double>> means;
    for (int i = 0; i < 12; ++i) means.push_back({rng.normal(), 0.01 * rng.normal(), 3.0 * rng.normal()});
    std::vector<double> var;
    active_units(means, 0.1, &var);
    const auto ref = reference::column_variances(means);
    for (std::size_t d = 0; d < var.size(); ++d) mismatches += std::abs(var[d] - ref[d]) > 1e-6;
    DiagonalGaussians q{{{10.0}, {-10.0}}, {{std::log(0.01)}, {std::log(0.01)}}};
    const double mi = mutual_information(q, 200, rng);
    mismatches += std::abs(mi - std::log(2.0)) > 0.05 * std::log(2.0);
    return {"metric_brute_force", mismatches == 0, std::to_string(mismatches) + " mismatches", "0"};
}

} // namespace detail

inline std::vector<CheckResult> run_verify(const VerifyOptions &opt = {}) {
    RngStream rng(opt.seed);
    std::vector<CheckResult> out;
    out.push_back(detail::check_gradients(opt.seed));
    out.push_back(detail::check_layer_norm(rng));
    out.push_back(detail::check_kl_floor(rng));
    out.push_back(detail::check_parallel_exact(rng));
    out.push_back(detail::check_parallel_moments(rng));
    out.push_back(detail::check_masks(rng));
    out.push_back(detail::check_spectral(opt.seed, opt.skip_spectral_norm));
    out.push_back(detail::check_metrics(rng));
    return out;
}

} // namespace tracevae
