#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace tracevae {

using Tokens = std::vector<std::string>;

namespace detail {

inline std::map<Tokens, std::size_t> ngram_counts(const Tokens &toks, std::size_t n) {
    std::map<Tokens, std::size_t> out;
    if (toks.size() < n) return out;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[Tokens(toks.begin() + i, toks.begin() + i + n)];
    return out;
}

inline std::size_t lcs_length(const Tokens &a, const Tokens &b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

} // namespace detail

// Sentence BLEU-4 on a 0-100 scale: clipped n-gram precisions against all
// references, closest-length brevity penalty, and 1e-9 added to every
// matched count so a missing order does not zero the score.
inline double sentence_bleu(const Tokens &candidate, const std::vector<Tokens> &references, std::size_t max_n = 4) {
    if (references.empty()) throw std::invalid_argument("bleu: need at least one reference");
    if (candidate.empty()) return 0.0;
    double log_p = 0.0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        const auto cand = detail::ngram_counts(candidate, n);
        std::map<Tokens, std::size_t> max_ref;
        for (const auto &r : references)
            for (const auto &[g, c] : detail::ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
        std::size_t matched = 0, total = 0;
        for (const auto &[g, c] : cand) {
            total += c;
            auto it = max_ref.find(g);
            if (it != max_ref.end()) matched += std::min(c, it->second);
        }
        log_p += std::log((static_cast<double>(matched) + 1e-9) / static_cast<double>(std::max<std::size_t>(total, 1)));
    }
    const double c = static_cast<double>(candidate.size());
    double r = static_cast<double>(references.front().size());
    for (const auto &ref : references) {
        const double rl = static_cast<double>(ref.size());
        if (std::abs(rl - c) < std::abs(r - c) || (std::abs(rl - c) == std::abs(r - c) && rl < r)) r = rl;
    }
    const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
    return 100.0 * bp * std::exp(log_p / static_cast<double>(max_n));
}

// Mean BLEU of each candidate against all others.
inline double self_bleu(const std::vector<Tokens> &candidates) {
    if (candidates.size() < 2) throw std::invalid_argument("self_bleu: need at least 2 candidates");
    double acc = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        std::vector<Tokens> others;
        for (std::size_t j = 0; j < candidates.size(); ++j)
            if (j != i) others.push_back(candidates[j]);
        acc += sentence_bleu(candidates[i], others);
    }
    return acc / static_cast<double>(candidates.size());
}

// Distinct n-grams over total n-grams, pooled across candidates.
inline double distinct_n(const std::vector<Tokens> &candidates, std::size_t n) {
    std::set<Tokens> uniq;
    std::size_t total = 0;
    for (const auto &c : candidates)
        for (const auto &[g, k] : detail::ngram_counts(c, n)) {
            uniq.insert(g);
            total += k;
        }
    return total == 0 ? 0.0 : static_cast<double>(uniq.size()) / static_cast<double>(total);
}

inline double jaccard(const Tokens &a, const Tokens &b) {
    const std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::vector<std::string> inter;
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(inter));
    const std::size_t uni = sa.size() + sb.size() - inter.size();
    return uni == 0 ? 0.0 : static_cast<double>(inter.size()) / static_cast<double>(uni);
}

// Mean unigram-set Jaccard similarity over unordered candidate pairs.
inline double mean_pairwise_jaccard(const std::vector<Tokens> &candidates) {
    if (candidates.size() < 2) throw std::invalid_argument("jaccard: need at least 2 candidates");
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        for (std::size_t j = i + 1; j < candidates.size(); ++j, ++pairs) acc += jaccard(candidates[i], candidates[j]);
    return acc / static_cast<double>(pairs);
}

// ROUGE-n recall, best over references.
inline double rouge_n(const Tokens &candidate, const std::vector<Tokens> &references, std::size_t n) {
    if (references.empty()) throw std::invalid_argument("rouge: need at least one reference");
    const auto cand = detail::ngram_counts(candidate, n);
    double best = 0.0;
    for (const auto &r : references) {
        const auto ref = detail::ngram_counts(r, n);
        std::size_t overlap = 0, total = 0;
        for (const auto &[g, c] : ref) {
            total += c;
            auto it = cand.find(g);
            if (it != cand.end()) overlap += std::min(c, it->second);
        }
        if (total > 0) best = std::max(best, static_cast<double>(overlap) / static_cast<double>(total));
    }
    return best;
}

// ROUGE-L F1 from the longest common subsequence, best over references.
inline double rouge_l(const Tokens &candidate, const std::vector<Tokens> &references) {
    if (references.empty()) throw std::invalid_argument("rouge: need at least one reference");
    double best = 0.0;
    for (const auto &r : references) {
        const double lcs = static_cast<double>(detail::lcs_length(candidate, r));
        if (lcs == 0.0) continue;
        const double p = lcs / static_cast<double>(candidate.size()), rec = lcs / static_cast<double>(r.size());
        best = std::max(best, 2.0 * p * rec / (p + rec));
    }
    return best;
}

} // namespace tracevae

namespace tracevae {

struct DiversityReport {
    double self_bleu = 0.0;
    std::map<std::size_t, double> dist_n;
    double jaccard = 0.0;
};

struct NgramScores {
    DiversityReport diversity;
    bool has_pairs = false;      // self_bleu and jaccard need >= 2 candidates
    bool has_references = false; // bleu and rouge need references
    double bleu = 0.0;
    double rouge1 = 0.0;
    double rouge2 = 0.0;
    double rougeL = 0.0;
    std::size_t excluded = 0; // empty candidates dropped
};

// Diversity over `candidates`; overlap scores averaged over candidates
// against the shared reference set when one is given.
inline NgramScores ngram_suite(const std::vector<Tokens> &candidates, const std::vector<Tokens> &references = {},
                               std::vector<std::string> *warnings = nullptr) {
    std::vector<Tokens> kept;
    NgramScores out;
    for (const auto &c : candidates) {
        if (c.empty()) {
            ++out.excluded;
            continue;
        }
        kept.push_back(c);
    }
    if (out.excluded > 0 && warnings)
        warnings->push_back("ngram_suite: excluded " + std::to_string(out.excluded) + " empty candidate(s)");
    if (kept.empty()) throw std::invalid_argument("ngram_suite: no non-empty candidates");

    out.diversity.dist_n[1] = distinct_n(kept, 1);
    out.diversity.dist_n[2] = distinct_n(kept, 2);
    if (kept.size() >= 2) {
        out.has_pairs = true;
        out.diversity.self_bleu = self_bleu(kept);
        out.diversity.jaccard = mean_pairwise_jaccard(kept);
    }
    if (!references.empty()) {
        out.has_references = true;
        for (const auto &c : kept) {
            out.bleu += sentence_bleu(c, references);
            out.rouge1 += rouge_n(c, references, 1);
            out.rouge2 += rouge_n(c, references, 2);
            out.rougeL += rouge_l(c, references);
        }
        const double n = static_cast<double>(kept.size());
        out.bleu /= n;
        out.rouge1 /= n;
        out.rouge2 /= n;
        out.rougeL /= n;
    }
    return out;
}

} // namespace tracevae
