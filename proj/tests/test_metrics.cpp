#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tracevae/metrics.hpp"
#include "tracevae/ngram.hpp"

using namespace tracevae;

namespace {

Tokens words(const std::string &s) {
    Tokens out;
    std::string cur;
    for (char c : s) {
        if (c == ' ') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<Tokens> random_corpus(RngStream &rng, std::size_t max_sentences, std::size_t vocab) {
    static const char *kWords[] = {"a", "b", "c", "d", "e", "f"};
    std::vector<Tokens> out(1 + rng.below(max_sentences));
    for (auto &s : out) {
        s.resize(1 + rng.below(8));
        for (auto &w : s) w = kWords[rng.below(vocab)];
    }
    return out;
}

} // namespace

TEST(Ngram, IdenticalCopies) {
    const std::vector<Tokens> c(3, words("the cat sat on the mat"));
    EXPECT_NEAR(self_bleu(c), 100.0, 1e-6);
    EXPECT_EQ(mean_pairwise_jaccard(c), 1.0);
    EXPECT_DOUBLE_EQ(distinct_n(c, 1), 5.0 / 18.0);
    EXPECT_DOUBLE_EQ(distinct_n(c, 2), 5.0 / 15.0);
}

TEST(Ngram, HandCountedDistinct) {
    const std::vector<Tokens> c{words("a b"), words("a b")};
    EXPECT_EQ(distinct_n(c, 1), 0.5);
    EXPECT_EQ(distinct_n(c, 2), 0.5);
}

TEST(Ngram, DisjointPair) {
    const std::vector<Tokens> c{words("a b c d"), words("e f g h")};
    EXPECT_EQ(mean_pairwise_jaccard(c), 0.0);
    EXPECT_LT(self_bleu(c), 1e-6);
    EXPECT_GE(self_bleu(c), 0.0);
}

TEST(Ngram, BleuAndRougeExamples) {
    const Tokens ref = words("a b c d e");
    EXPECT_NEAR(sentence_bleu(ref, {ref}), 100.0, 1e-6);
    const Tokens shorter = words("a b c d");
    EXPECT_NEAR(sentence_bleu(shorter, {ref}), 100.0 * std::exp(1.0 - 5.0 / 4.0), 1e-6);
    EXPECT_EQ(rouge_n(shorter, {ref}, 1), 0.8);
    EXPECT_EQ(rouge_n(shorter, {ref}, 2), 0.75);
    EXPECT_NEAR(rouge_l(words("a c e"), {ref}), 2.0 * 1.0 * 0.6 / 1.6, 1e-12);
    EXPECT_THROW(sentence_bleu(ref, {}), std::invalid_argument);
    EXPECT_THROW(self_bleu({ref}), std::invalid_argument);
}

TEST(Ngram, MatchesExhaustiveOracle) {
    RngStream rng(2024);
    for (int trial = 0; trial < 400; ++trial) {
        const auto c = random_corpus(rng, 5, 2 + trial % 5);
        const auto refs = random_corpus(rng, 5, 2 + trial % 5);
        EXPECT_EQ(distinct_n(c, 1), oracle::dist(c, 1));
        EXPECT_EQ(distinct_n(c, 2), oracle::dist(c, 2));
        if (c.size() >= 2) {
            EXPECT_EQ(self_bleu(c), oracle::self_bleu(c));
            EXPECT_EQ(mean_pairwise_jaccard(c), oracle::jaccard(c));
        }
        for (const auto &s : c) {
            EXPECT_EQ(sentence_bleu(s, refs), oracle::bleu(s, refs));
            EXPECT_EQ(rouge_n(s, refs, 1), oracle::rouge_n(s, refs, 1));
            EXPECT_EQ(rouge_n(s, refs, 2), oracle::rouge_n(s, refs, 2));
            EXPECT_EQ(rouge_l(s, refs), oracle::rouge_l(s, refs));
        }
    }
}

TEST(Ngram, SuiteDropsEmptyCandidates) {
    std::vector<std::string> warnings;
    const std::vector<Tokens> c{words("a b"), Tokens{}, words("a c")};
    auto r = ngram_suite(c, {words("a b c")}, &warnings);
    EXPECT_EQ(r.excluded, 1u);
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_TRUE(r.has_pairs);
    EXPECT_TRUE(r.has_references);
    EXPECT_EQ(r.diversity.dist_n.at(1), 3.0 / 4.0);
    EXPECT_GT(r.diversity.dist_n.at(2), 0.0);
    EXPECT_LE(r.diversity.dist_n.at(2), 1.0);
    EXPECT_THROW(ngram_suite({Tokens{}}), std::invalid_argument);
    auto single = ngram_suite({words("x y")});
    EXPECT_FALSE(single.has_pairs);
    EXPECT_FALSE(single.has_references);
}

TEST(ActiveUnits, ConstantMeansGiveZero) {
    std::vector<std::vector<double>> m(10, std::vector<double>{0.3, -1.0, 2.0});
    EXPECT_EQ(active_units(m, 0.1), 0u);
}

TEST(ActiveUnits, OneVaryingDimension) {
    // Sequence index scaled to unit sample variance.
    const std::size_t n = 20;
    const double sd = std::sqrt(n * (n + 1) / 12.0);
    std::vector<std::vector<double>> m;
    for (std::size_t i = 0; i < n; ++i) m.push_back({static_cast<double>(i) / sd, 0.5, 0.5});
    std::vector<double> var;
    EXPECT_EQ(active_units(m, 0.1, &var), 1u);
    EXPECT_NEAR(var[0], 1.0, 1e-12);
    EXPECT_THROW(active_units(std::vector<std::vector<double>>{{1.0}}, 0.1), std::invalid_argument);
}

TEST(ActiveUnits, MatchesDirectCovariance) {
    RngStream rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<double>> m(2 + rng.below(30), std::vector<double>(6));
        for (auto &r : m)
            for (std::size_t d = 0; d < r.size(); ++d) r[d] = rng.normal() * 0.2 * static_cast<double>(d);
        std::vector<double> var;
        const std::size_t au = active_units(m, 0.1, &var);
        const auto ref = oracle::column_variances(m);
        std::size_t expect = 0;
        for (std::size_t d = 0; d < ref.size(); ++d) {
            EXPECT_NEAR(var[d], ref[d], 1e-6);
            expect += ref[d] > 0.1 ? 1 : 0;
        }
        EXPECT_EQ(au, expect);
    }
}

TEST(ActiveUnits, ModelPoolsPosteriorMeans) {
    TraceModel m(fixture::tiny_config());
    fixture::scramble(m, 0.5, 3);
    RngStream rng(4);
    std::vector<SegmentedSequence> data;
    for (int i = 0; i < 6; ++i) data.push_back(segment(fixture::random_ids(9, 12, rng), SegmentPolicy::fixed(3)));
    std::vector<double> var;
    const std::size_t au = active_units(m, data, 0.1, &var);
    std::vector<std::vector<double>> rows;
    for (const auto &s : data) {
        NoGradGuard ng;
        auto plan = infer_latents(m, s, Paradigm::rgd, Noise::zeros(s.num_segments(), 4), false);
        const Tensor pm = plan.trajectory.posterior_mean();
        for (std::size_t t = 0; t < pm.rows(); ++t) rows.push_back(pm.row_values(t));
    }
    EXPECT_EQ(rows.size(), 18u);
    const auto ref = oracle::column_variances(rows);
    std::size_t expect = 0;
    for (std::size_t d = 0; d < 4; ++d) {
        EXPECT_NEAR(var[d], ref[d], 1e-9);
        expect += ref[d] > 0.1 ? 1 : 0;
    }
    EXPECT_EQ(au, expect);
}

TEST(MutualInformation, IdenticalPosteriorsGiveZero) {
    DiagonalGaussians q;
    for (int i = 0; i < 5; ++i) {
        q.means.push_back({0.4, -0.2});
        q.log_vars.push_back({0.1, -0.3});
    }
    RngStream rng(1);
    EXPECT_NEAR(mutual_information(q, 100, rng), 0.0, 1e-6);
}

TEST(MutualInformation, SeparatedPairIsLogTwo) {
    DiagonalGaussians q{{{10.0}, {-10.0}}, {{std::log(0.01)}, {std::log(0.01)}}};
    RngStream rng(2);
    const double mi = mutual_information(q, 200, rng);
    EXPECT_NEAR(mi, std::log(2.0), 0.05 * std::log(2.0));
    EXPECT_NEAR(oracle::mixture_mi({10.0, -10.0}, {0.01, 0.01}), std::log(2.0), 1e-6);
}

TEST(MutualInformation, MatchesQuadratureOracle) {
    RngStream rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> means, vars;
        DiagonalGaussians q;
        const std::size_t n = 2 + rng.below(4);
        for (std::size_t i = 0; i < n; ++i) {
            means.push_back(2.0 * rng.normal());
            vars.push_back(std::exp(rng.normal() * 0.5));
            q.means.push_back({means.back()});
            q.log_vars.push_back({std::log(vars.back())});
        }
        const double want = oracle::mixture_mi(means, vars);
        const double got = mutual_information(q, 20000, rng);
        EXPECT_NEAR(got, want, 0.05 * want) << "trial " << trial;
        EXPECT_GE(got, -1e-3);
    }
}

TEST(MutualInformation, RejectsDegenerateBatch) {
    DiagonalGaussians q{{{0.0}}, {{0.0}}};
    RngStream rng(3);
    EXPECT_THROW(mutual_information(q, 10, rng), std::invalid_argument);
    TraceModel m(fixture::tiny_config());
    std::vector<SegmentedSequence> data{segment({5, 6, 7}, SegmentPolicy::fixed(2)),
                                        segment({6, 6, 7}, SegmentPolicy::fixed(2))};
    auto streams = RngStreams::from_seed(1);
    EXPECT_THROW(mutual_information(m, data, 1, streams), std::invalid_argument);
    EXPECT_GE(mutual_information(m, data, 2, streams), -1e-3);
}

TEST(IwNll, ConstantWeightsWhenLatentsAreInert) {
    auto cfg = fixture::tiny_config();
    cfg.latent.gamma = 0.0;
    TraceModel m(cfg);
    Tensor proj = m.backbone().latent_proj();
    for (double &v : proj.mutable_values()) v = 0.0;
    const auto s = segment({5, 6, 7, 8, 9}, SegmentPolicy::fixed(2));
    auto rng = RngStreams::from_seed(5);
    const auto est = iw_nll(m, s, 7, rng);
    const double exact = fixture::iw_toy_loglik(m, s, 0.0);
    for (double w : est.log_weights) EXPECT_NEAR(w, exact, 1e-10);
    EXPECT_NEAR(est.log_px_hat, exact, 1e-10);
    EXPECT_NEAR(est.ppl, std::exp(-exact / static_cast<double>(s.length() + 1)), 1e-9);
    EXPECT_EQ(est.tokens, 9u);
}

TEST(IwNll, SingleSampleIsOneElboDraw) {
    TraceModel m = fixture::iw_toy_model();
    const auto s = fixture::iw_toy_sequence();
    auto a = RngStreams::from_seed(8), b = a;
    const auto est = iw_nll(m, s, 1, a);
    ASSERT_EQ(est.log_weights.size(), 1u);
    EXPECT_EQ(est.log_px_hat, est.log_weights[0]);

    NoGradGuard ng;
    const Noise noise = Noise::draw(1, 1, b);
    const auto rep = elbo(m, s, Paradigm::rgd, 1.0, noise);
    const auto &tr = rep.trajectory;
    const auto z = tr.z.row_values(0);
    const double w = rep.recon + gaussian_log_density(z, tr.mu.row_values(0), tr.log_sigma2.row_values(0)) -
                     gaussian_log_density(z, tr.posterior_mean().row_values(0), tr.posterior_log_var().row_values(0));
    EXPECT_NEAR(est.log_px_hat, w, 1e-10);
    EXPECT_THROW(iw_nll(m, s, 0, a), std::invalid_argument);
}

TEST(IwNll, ApproachesQuadratureEvidence) {
    TraceModel m = fixture::iw_toy_model();
    const auto s = fixture::iw_toy_sequence();
    const double log_px = std::log(oracle::integrate_line([&](double z) {
        return oracle::normal_pdf(z, 0.0, 1.0) * std::exp(fixture::iw_toy_loglik(m, s, z));
    }));
    const std::size_t reps = 50;
    std::vector<double> means;
    for (std::size_t n : {1u, 10u, 100u}) {
        std::vector<double> xs;
        for (std::size_t r = 0; r < reps; ++r) {
            auto rng = RngStreams::from_seed(1000 + r);
            xs.push_back(iw_nll(m, s, n, rng).log_px_hat);
        }
        const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / reps;
        double ss = 0.0;
        for (double x : xs) ss += (x - mean) * (x - mean);
        const double se = std::sqrt(ss / (reps - 1) / reps);
        EXPECT_LE(mean, log_px + 3.0 * se) << "n=" << n;
        means.push_back(mean);
    }
    EXPECT_LT(means[0], means[1]);
    EXPECT_LT(means[1], means[2]);
}
