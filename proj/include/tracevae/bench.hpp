#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracevae/train.hpp"

namespace tracevae {

struct BenchOptions {
    std::size_t seq_len = 64; // content tokens per sequence, SEPs excluded
    std::vector<std::size_t> segment_lengths{1, 5, 10, 20};
    std::size_t steps = 20;
    std::size_t warmup = 3;
    std::size_t batch_size = 4;
    std::size_t sequences = 16;
    ModelConfig model; // paradigm, parallel, gamma and max_len are overridden
    std::uint64_t seed = 1;
};

struct BenchRow {
    std::size_t segment_length = 0;
    std::size_t segments = 0;
    double sequential_secs = 0.0;
    double parallel_secs = 0.0;

    double ratio() const { return parallel_secs / sequential_secs; }
};

inline const char *kBenchHeader = "# segment_length\tsegments\tsequential_secs\tparallel_secs\tratio";

inline std::string format_bench_row(const BenchRow &r) {
    std::ostringstream os;
    os << r.segment_length << '\t' << r.segments << '\t' << r.sequential_secs << '\t' << r.parallel_secs << '\t'
       << r.ratio();
    return os.str();
}

// Mean seconds per training step of the sequential and parallel RGD
// samplers on identical data, weights and seeds. Steps alternate between
// the two so that drift in machine load hits both columns alike.
inline std::vector<BenchRow> run_bench(const BenchOptions &opt) {
    if (opt.steps < 10) throw std::invalid_argument("bench: need at least 10 timed steps");
    if (opt.seq_len == 0 || opt.model.backbone.vocab_size <= kNumReserved)
        throw std::invalid_argument("bench: need a positive seq_len and a vocabulary with ordinary tokens");
    std::vector<BenchRow> rows;
    for (std::size_t k : opt.segment_lengths) {
        if (k == 0) throw std::invalid_argument("bench: segment length must be >= 1");
        RngStream data_rng(opt.seed);
        std::vector<SegmentedSequence> data;
        for (std::size_t i = 0; i < opt.sequences; ++i) {
            std::vector<TokenId> ids(opt.seq_len);
            for (auto &t : ids)
                t = static_cast<TokenId>(kNumReserved + data_rng.below(opt.model.backbone.vocab_size - kNumReserved));
            data.push_back(segment(ids, SegmentPolicy::fixed(k)));
        }

        ModelConfig cfg = opt.model;
        cfg.paradigm = Paradigm::rgd;
        // Step cost does not depend on gamma; gamma = 1 keeps long
        // token-wise chains finite.
        cfg.latent.gamma = 1.0;
        cfg.backbone.max_len = std::max(cfg.backbone.max_len, data.front().length() + 1);
        cfg.seed = opt.seed;
        TrainOptions to;
        to.batch_size = opt.batch_size;
        to.steps = opt.warmup + opt.steps;

        cfg.latent.parallel = false;
        TraceModel seq_model(cfg);
        cfg.latent.parallel = true;
        TraceModel par_model(cfg);
        TrainState st;
        st.rng = RngStreams::from_seed(opt.seed);
        Trainer seq_tr(seq_model, to, st), par_tr(par_model, to, st);

        BenchRow row;
        row.segment_length = k;
        row.segments = data.front().num_segments();
        for (std::size_t s = 0; s < opt.warmup + opt.steps; ++s) {
            const double a = seq_tr.step(data).secs;
            const double b = par_tr.step(data).secs;
            if (s >= opt.warmup) {
                row.sequential_secs += a;
                row.parallel_secs += b;
            }
        }
        row.sequential_secs /= static_cast<double>(opt.steps);
        row.parallel_secs /= static_cast<double>(opt.steps);
        rows.push_back(row);
    }
    return rows;
}

} // namespace tracevae
