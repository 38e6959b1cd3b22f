#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracevae/rng.hpp"
#include "tracevae/segment.hpp"
#include "tracevae/vocab.hpp"

namespace tracevae {

// Non-empty lines of a UTF-8 text file, one document per line.
inline std::vector<std::string> read_lines(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read corpus " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

inline void write_lines(const std::string &path, const std::vector<std::string> &lines) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto &l : lines) out << l << '\n';
}

// Three hidden states, each emitting from its own block of letters
// (a-i, j-r, s-z) with weights 1/(k+1), and a sticky transition matrix.
// Lengths are uniform on [min_len, max_len].
class SyntheticGrammar {
  public:
    static constexpr std::size_t kStates = 3;
    static constexpr std::array<double, 9> kTransition{0.6, 0.3, 0.1, 0.1, 0.6, 0.3, 0.3, 0.1, 0.6};

    SyntheticGrammar(std::size_t min_len, std::size_t max_len) : min_len_(min_len), max_len_(max_len) {
        if (min_len == 0 || max_len < min_len) throw std::invalid_argument("synthetic grammar: need 1 <= min_len <= max_len");
    }

    static char block_start(std::size_t s) { return static_cast<char>('a' + 9 * s); }
    static std::size_t block_size(std::size_t s) { return s == 2 ? 8 : 9; }

    static double emission(std::size_t s, char c) {
        const int k = c - block_start(s);
        if (k < 0 || k >= static_cast<int>(block_size(s))) return 0.0;
        double z = 0.0;
        for (std::size_t j = 0; j < block_size(s); ++j) z += 1.0 / static_cast<double>(j + 1);
        return (1.0 / static_cast<double>(k + 1)) / z;
    }

    std::string sample(RngStream &rng) const {
        const std::size_t n = min_len_ + rng.below(max_len_ - min_len_ + 1);
        std::size_t s = rng.below(kStates);
        std::string out;
        for (std::size_t i = 0; i < n; ++i) {
            if (i > 0) s = draw_categorical(&kTransition[s * kStates], kStates, rng);
            std::array<double, 9> w{};
            for (std::size_t k = 0; k < block_size(s); ++k) w[k] = emission(s, static_cast<char>(block_start(s) + k));
            out.push_back(static_cast<char>(block_start(s) + draw_categorical(w.data(), block_size(s), rng)));
        }
        return out;
    }

    std::vector<std::string> sample_lines(std::size_t count, RngStream &rng) const {
        std::vector<std::string> out;
        out.reserve(count);
        for (std::size_t i = 0; i < count; ++i) out.push_back(sample(rng));
        return out;
    }

    // Exact log-probability of a line under the generator (forward algorithm
    // plus the length prior). -inf for strings it cannot produce.
    double log_prob(const std::string &line) const {
        if (line.size() < min_len_ || line.size() > max_len_) return -INFINITY;
        std::array<double, kStates> alpha{};
        for (std::size_t s = 0; s < kStates; ++s) alpha[s] = emission(s, line[0]) / static_cast<double>(kStates);
        double logp = 0.0;
        for (std::size_t i = 1; i <= line.size(); ++i) {
            double norm = 0.0;
            for (double a : alpha) norm += a;
            if (norm == 0.0) return -INFINITY;
            logp += std::log(norm);
            for (double &a : alpha) a /= norm;
            if (i == line.size()) break;
            std::array<double, kStates> next{};
            for (std::size_t t = 0; t < kStates; ++t) {
                double s = 0.0;
                for (std::size_t u = 0; u < kStates; ++u) s += alpha[u] * kTransition[u * kStates + t];
                next[t] = s * emission(t, line[i]);
            }
            alpha = next;
        }
        return logp - std::log(static_cast<double>(max_len_ - min_len_ + 1));
    }

  private:
    static std::size_t draw_categorical(const double *w, std::size_t n, RngStream &rng) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += w[i];
        double u = rng.uniform() * total;
        for (std::size_t i = 0; i < n; ++i) {
            if (u < w[i]) return i;
            u -= w[i];
        }
        return n - 1;
    }

    std::size_t min_len_;
    std::size_t max_len_;
};

// Tokenizes, truncates so the decoder input ([BOS] + ids + SEPs) fits in
// max_len, and segments every line.
inline std::vector<SegmentedSequence> encode_corpus(const std::vector<std::string> &lines, const Vocab &vocab,
                                                    const SegmentPolicy &policy, std::size_t max_len,
                                                    std::size_t *truncated = nullptr) {
    std::vector<SegmentedSequence> out;
    std::size_t cut = 0;
    for (const auto &line : lines) {
        auto ids = vocab.encode(line);
        if (ids.empty()) continue;
        auto seq = segment(ids, policy);
        if (seq.length() + 1 > max_len) {
            while (!ids.empty() && seq.length() + 1 > max_len) {
                ids.pop_back();
                if (!ids.empty()) seq = segment(ids, policy);
            }
            if (ids.empty()) continue;
            ++cut;
        }
        out.push_back(std::move(seq));
    }
    if (truncated) *truncated = cut;
    return out;
}

} // namespace tracevae
