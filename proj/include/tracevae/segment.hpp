#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracevae/tensor.hpp"
#include "tracevae/vocab.hpp"

namespace tracevae {

// Token ids with a SEP closing every segment.
struct SegmentedSequence {
    std::vector<TokenId> ids;
    std::vector<std::size_t> boundaries;    // start index of each segment
    std::vector<std::size_t> sep_positions; // index of each segment's SEP

    std::size_t length() const { return ids.size(); }
    std::size_t num_segments() const { return boundaries.size(); }

    std::size_t segment_of(std::size_t pos) const {
        auto it = std::upper_bound(boundaries.begin(), boundaries.end(), pos);
        return static_cast<std::size_t>(it - boundaries.begin()) - 1;
    }

    std::vector<std::size_t> segment_index() const {
        std::vector<std::size_t> seg(ids.size());
        for (std::size_t t = 0; t < boundaries.size(); ++t)
            for (std::size_t i = boundaries[t]; i <= sep_positions[t]; ++i) seg[i] = t;
        return seg;
    }

    bool operator==(const SegmentedSequence &) const = default;
};

struct SegmentPolicy {
    enum class Kind { fixed, sentence } kind = Kind::fixed;
    std::size_t length = 10;
    std::vector<TokenId> delimiters;

    static SegmentPolicy fixed(std::size_t k) { return {Kind::fixed, k, {}}; }
    static SegmentPolicy sentence(std::vector<TokenId> delims) { return {Kind::sentence, 0, std::move(delims)}; }
};

inline void validate(const SegmentedSequence &s) {
    const std::size_t T = s.boundaries.size();
    if (T == 0 || s.sep_positions.size() != T) throw std::invalid_argument("segmented sequence: inconsistent segment count");
    std::size_t expect = 0;
    for (std::size_t t = 0; t < T; ++t) {
        if (s.boundaries[t] != expect || s.sep_positions[t] < s.boundaries[t] || s.sep_positions[t] >= s.ids.size() ||
            s.ids[s.sep_positions[t]] != kSep)
            throw std::invalid_argument("segmented sequence: malformed segment " + std::to_string(t));
        for (std::size_t i = s.boundaries[t]; i < s.sep_positions[t]; ++i)
            if (s.ids[i] == kSep) throw std::invalid_argument("segmented sequence: stray SEP inside segment");
        expect = s.sep_positions[t] + 1;
    }
    if (expect != s.ids.size()) throw std::invalid_argument("segmented sequence: trailing tokens after last SEP");
}

inline SegmentedSequence segment(const std::vector<TokenId> &ids, const SegmentPolicy &policy) {
    if (ids.empty()) throw std::invalid_argument("segment: empty token sequence");
    if (policy.kind == SegmentPolicy::Kind::fixed && policy.length == 0)
        throw std::invalid_argument("segment: fixed segment length must be >= 1");
    for (TokenId t : ids)
        if (t == kSep || t == kPad || t == kBos || t == kEos)
            throw std::invalid_argument("segment: input contains reserved id " + std::to_string(t));

    SegmentedSequence out;
    std::size_t in_segment = 0;
    auto close = [&] {
        out.sep_positions.push_back(out.ids.size());
        out.ids.push_back(kSep);
        in_segment = 0;
    };
    for (TokenId t : ids) {
        if (in_segment == 0) out.boundaries.push_back(out.ids.size());
        out.ids.push_back(t);
        ++in_segment;
        const bool boundary = policy.kind == SegmentPolicy::Kind::fixed
                                  ? in_segment == policy.length
                                  : std::find(policy.delimiters.begin(), policy.delimiters.end(), t) != policy.delimiters.end();
        if (boundary) close();
    }
    if (in_segment > 0) close();
    return out;
}

// Rebuilds segment bookkeeping from a SEP-terminated id list.
inline SegmentedSequence from_separated(const std::vector<TokenId> &ids) {
    SegmentedSequence out;
    out.ids = ids;
    bool open = false;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!open) {
            out.boundaries.push_back(i);
            open = true;
        }
        if (ids[i] == kSep) {
            out.sep_positions.push_back(i);
            open = false;
        }
    }
    validate(out);
    return out;
}

inline std::vector<TokenId> strip_separators(const SegmentedSequence &s) {
    std::vector<TokenId> out;
    for (TokenId t : s.ids)
        if (t != kSep) out.push_back(t);
    return out;
}

// extra: attend to own and earlier segments; intra: own segment only.
struct MaskPair {
    BoolMatrix extra;
    BoolMatrix intra;
};

inline MaskPair build_masks(const SegmentedSequence &s) {
    validate(s);
    const std::size_t L = s.length();
    const auto seg = s.segment_index();
    MaskPair m{BoolMatrix(L, L), BoolMatrix(L, L)};
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < L; ++j) {
            m.extra.set(i, j, seg[j] <= seg[i]);
            m.intra.set(i, j, seg[j] == seg[i]);
        }
    return m;
}

inline BoolMatrix causal_mask(std::size_t n) {
    BoolMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
    return m;
}

} // namespace tracevae
