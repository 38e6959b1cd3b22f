#pragma once

// Direct, unoptimized reimplementations used as cross-checks by the
// verification suite and the tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace tracevae::reference {

// Eigenvalues of a symmetric n x n matrix by cyclic Jacobi rotations.
inline std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t n) {
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a[i * n + i];
    std::sort(ev.begin(), ev.end());
    return ev;
}

// Largest singular value of an r x c row-major matrix via eig(W^T W).
inline double sigma_max(const std::vector<double> &w, std::size_t r, std::size_t c) {
    std::vector<double> g(c * c, 0.0);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j)
            for (std::size_t k = 0; k < r; ++k) g[i * c + j] += w[k * c + i] * w[k * c + j];
    return std::sqrt(std::max(0.0, jacobi_eigenvalues(g, c).back()));
}

// Segment membership of each position, read straight off the SEP layout.
inline std::vector<std::size_t> membership(const std::vector<int> &ids, int sep) {
    std::vector<std::size_t> seg(ids.size());
    std::size_t t = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        seg[i] = t;
        if (ids[i] == sep) ++t;
    }
    return seg;
}

using Toks = std::vector<std::string>;

inline std::vector<Toks> grams(const Toks &t, std::size_t n) {
    std::vector<Toks> out;
    for (std::size_t i = 0; i + n <= t.size(); ++i) out.emplace_back(t.begin() + i, t.begin() + i + n);
    return out;
}

inline std::size_t count_of(const std::vector<Toks> &gs, const Toks &g) {
    return static_cast<std::size_t>(std::count(gs.begin(), gs.end(), g));
}

inline bool first_occurrence(const std::vector<Toks> &gs, std::size_t i) {
    return std::find(gs.begin(), gs.end(), gs[i]) == gs.begin() + static_cast<std::ptrdiff_t>(i);
}

inline double bleu(const Toks &c, const std::vector<Toks> &refs) {
    if (c.empty()) return 0.0;
    double log_p = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto cg = grams(c, n);
        std::size_t matched = 0;
        for (std::size_t i = 0; i < cg.size(); ++i) {
            if (!first_occurrence(cg, i)) continue;
            std::size_t best = 0;
            for (const auto &r : refs) best = std::max(best, count_of(grams(r, n), cg[i]));
            matched += std::min(count_of(cg, cg[i]), best);
        }
        log_p += std::log((static_cast<double>(matched) + 1e-9) / static_cast<double>(std::max<std::size_t>(cg.size(), 1)));
    }
    const double len = static_cast<double>(c.size());
    std::vector<std::pair<double, double>> by_gap;
    for (const auto &r : refs) by_gap.emplace_back(std::abs(static_cast<double>(r.size()) - len), static_cast<double>(r.size()));
    std::sort(by_gap.begin(), by_gap.end());
    const double r = by_gap.front().second;
    const double bp = len >= r ? 1.0 : std::exp(1.0 - r / len);
    return 100.0 * bp * std::exp(log_p / 4.0);
}

inline double self_bleu(const std::vector<Toks> &cs) {
    double acc = 0.0;
    for (std::size_t i = 0; i < cs.size(); ++i) {
        std::vector<Toks> rest = cs;
        rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(i));
        acc += bleu(cs[i], rest);
    }
    return acc / static_cast<double>(cs.size());
}

inline double dist(const std::vector<Toks> &cs, std::size_t n) {
    std::vector<Toks> all;
    for (const auto &c : cs)
        for (auto &g : grams(c, n)) all.push_back(g);
    std::size_t distinct = 0;
    for (std::size_t i = 0; i < all.size(); ++i) distinct += first_occurrence(all, i) ? 1 : 0;
    return all.empty() ? 0.0 : static_cast<double>(distinct) / static_cast<double>(all.size());
}

inline double jaccard(const std::vector<Toks> &cs) {
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < cs.size(); ++i)
        for (std::size_t j = i + 1; j < cs.size(); ++j, ++pairs) {
            Toks u = cs[i];
            u.insert(u.end(), cs[j].begin(), cs[j].end());
            std::sort(u.begin(), u.end());
            u.erase(std::unique(u.begin(), u.end()), u.end());
            std::size_t both = 0;
            for (const auto &w : u)
                if (std::count(cs[i].begin(), cs[i].end(), w) && std::count(cs[j].begin(), cs[j].end(), w)) ++both;
            acc += u.empty() ? 0.0 : static_cast<double>(both) / static_cast<double>(u.size());
        }
    return acc / static_cast<double>(pairs);
}

inline double rouge_n(const Toks &c, const std::vector<Toks> &refs, std::size_t n) {
    const auto cg = grams(c, n);
    double best = 0.0;
    for (const auto &r : refs) {
        const auto rg = grams(r, n);
        std::size_t overlap = 0;
        for (std::size_t i = 0; i < rg.size(); ++i)
            if (first_occurrence(rg, i)) overlap += std::min(count_of(rg, rg[i]), count_of(cg, rg[i]));
        if (!rg.empty()) best = std::max(best, static_cast<double>(overlap) / static_cast<double>(rg.size()));
    }
    return best;
}

inline bool is_subsequence(const Toks &s, const Toks &t) {
    std::size_t j = 0;
    for (std::size_t i = 0; i < t.size() && j < s.size(); ++i)
        if (t[i] == s[j]) ++j;
    return j == s.size();
}

// Longest common subsequence by enumerating every subsequence of `a`.
inline std::size_t lcs(const Toks &a, const Toks &b) {
    std::size_t best = 0;
    for (unsigned mask = 0; mask < (1u << a.size()); ++mask) {
        Toks s;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (mask & (1u << i)) s.push_back(a[i]);
        if (s.size() > best && is_subsequence(s, b)) best = s.size();
    }
    return best;
}

inline double rouge_l(const Toks &c, const std::vector<Toks> &refs) {
    double best = 0.0;
    for (const auto &r : refs) {
        const double k = static_cast<double>(lcs(c, r));
        if (k == 0.0) continue;
        const double p = k / static_cast<double>(c.size()), rec = k / static_cast<double>(r.size());
        best = std::max(best, 2.0 * p * rec / (p + rec));
    }
    return best;
}

// Sample variance of each column, two-pass over a row list.
inline std::vector<double> column_variances(const std::vector<std::vector<double>> &rows) {
    const std::size_t n = rows.size(), d = rows[0].size();
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    for (const auto &r : rows)
        for (std::size_t k = 0; k < d; ++k) mean[k] += r[k] / static_cast<double>(n);
    for (const auto &r : rows)
        for (std::size_t k = 0; k < d; ++k) var[k] += (r[k] - mean[k]) * (r[k] - mean[k]) / static_cast<double>(n - 1);
    return var;
}

// Random rank-k orthogonal projection Q Q^T (idempotent), row-major l x l,
// with k drawn uniformly from 1..l.
template <class Rng> std::vector<double> random_projection(std::size_t l, Rng &rng) {
    const std::size_t k = 1 + rng.below(l);
    std::vector<std::vector<double>> q;
    while (q.size() < k) {
        std::vector<double> v(l);
        for (double &x : v) x = rng.normal();
        for (const auto &u : q) {
            double d = 0.0;
            for (std::size_t i = 0; i < l; ++i) d += u[i] * v[i];
            for (std::size_t i = 0; i < l; ++i) v[i] -= d * u[i];
        }
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        for (double &x : v) x /= n;
        q.push_back(v);
    }
    std::vector<double> p(l * l, 0.0);
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = 0; j < l; ++j)
            for (const auto &u : q) p[i * l + j] += u[i] * u[j];
    return p;
}

} // namespace tracevae::reference
