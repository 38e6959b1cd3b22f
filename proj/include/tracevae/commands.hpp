#pragma once

// The work behind each CLI subcommand, kept out of main() so tests can
// drive it directly.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tracevae/bench.hpp"
#include "tracevae/checkpoint.hpp"
#include "tracevae/config.hpp"
#include "tracevae/corpus.hpp"
#include "tracevae/generate.hpp"
#include "tracevae/metrics.hpp"
#include "tracevae/ngram.hpp"
#include "tracevae/train.hpp"
#include "tracevae/verify.hpp"

namespace tracevae {

namespace fs = std::filesystem;

struct Dataset {
    Vocab vocab;
    std::vector<std::string> train_lines;
    std::vector<std::string> valid_lines;
    std::vector<SegmentedSequence> train;
    std::vector<SegmentedSequence> valid;
};

// Reads or synthesizes the corpus, builds or loads the vocabulary and
// encodes both splits. Paths written under `out` are recorded in `cfg`.
inline Dataset prepare_data(RunConfig &cfg, const fs::path &out) {
    Dataset d;
    fs::create_directories(out);
    if (cfg.corpus.empty()) {
        const SyntheticGrammar g(cfg.synthetic_min_len, cfg.synthetic_max_len);
        RngStream rng(cfg.seed ^ 0xc0ffee);
        d.train_lines = g.sample_lines(cfg.synthetic_lines, rng);
        cfg.corpus = (out / "corpus.txt").string();
        write_lines(cfg.corpus, d.train_lines);
        if (cfg.valid_corpus.empty()) {
            d.valid_lines = g.sample_lines(std::max<std::size_t>(2, cfg.synthetic_lines / 10), rng);
            cfg.valid_corpus = (out / "valid.txt").string();
            write_lines(cfg.valid_corpus, d.valid_lines);
        }
    } else {
        d.train_lines = read_lines(cfg.corpus);
    }
    if (d.valid_lines.empty()) {
        if (!cfg.valid_corpus.empty()) {
            d.valid_lines = read_lines(cfg.valid_corpus);
        } else if (d.train_lines.size() >= 2) {
            const std::size_t n = std::max<std::size_t>(1, d.train_lines.size() / 10);
            d.valid_lines.assign(d.train_lines.end() - static_cast<long>(n), d.train_lines.end());
            d.train_lines.resize(d.train_lines.size() - n);
        }
    }
    if (d.train_lines.empty()) throw std::invalid_argument("training corpus is empty");

    if (cfg.vocab.empty()) {
        d.vocab = build_vocab(d.train_lines, cfg.level());
        cfg.vocab = (out / "vocab.txt").string();
        d.vocab.save(cfg.vocab);
    } else {
        d.vocab = Vocab::load(cfg.vocab, cfg.level());
    }
    cfg.vocab_size = d.vocab.size();
    const auto policy = cfg.policy(d.vocab);
    d.train = encode_corpus(d.train_lines, d.vocab, policy, cfg.max_len);
    d.valid = encode_corpus(d.valid_lines, d.vocab, policy, cfg.max_len);
    if (d.train.empty()) throw std::invalid_argument("training corpus has no encodable lines");
    return d;
}

struct TrainResult {
    std::vector<StepLog> log;
    TrainState state;
    double final_valid = 0.0;
    std::size_t below_floor = 0;
    std::string checkpoint;
};

// Trains until cfg.steps total steps. Resumes from `resume` when given.
// Writes train.log, checkpoint.bin and summary.tsv under `out`.
inline TrainResult cmd_train(RunConfig cfg, const fs::path &out, const Checkpoint *resume = nullptr,
                             std::ostream *progress = nullptr) {
    Dataset data = prepare_data(cfg, out);
    TraceModel model(cfg.model_config());
    TrainState state;
    state.rng = RngStreams::from_seed(cfg.seed);
    if (resume) state = restore(model, *resume);
    cfg.checkpoint = (out / "checkpoint.bin").string();

    Trainer trainer(model, cfg.train_options(), state);
    TrainResult res;
    res.checkpoint = cfg.checkpoint;
    std::ofstream log(out / "train.log");
    if (!log) throw std::runtime_error("cannot write " + (out / "train.log").string());
    log << kStepLogHeader << '\n';
    auto save = [&] { save_checkpoint(cfg.checkpoint, capture(model, trainer.state(), cfg.echo())); };
    while (trainer.state().step < cfg.steps) {
        StepLog s = trainer.step(data.train);
        log << format_step(s) << '\n';
        if (s.below_floor()) ++res.below_floor;
        res.log.push_back(s);
        if (!data.valid.empty() && cfg.valid_every > 0 && s.step % cfg.valid_every == 0) {
            const double v = trainer.validate(data.valid);
            if (progress) *progress << "step " << s.step << " valid " << v << '\n';
        }
        if (cfg.checkpoint_every > 0 && s.step % cfg.checkpoint_every == 0) save();
    }
    log.flush();
    if (!data.valid.empty()) res.final_valid = trainer.validate(data.valid);
    save();
    res.state = trainer.state();

    std::ofstream summary(out / "summary.tsv");
    summary << "# metric\tvalue\n" << std::setprecision(10);
    summary << "steps\t" << res.state.step << '\n';
    summary << "valid_objective\t" << res.final_valid << '\n';
    summary << "best_valid\t" << res.state.best_valid << '\n';
    summary << "below_floor_steps\t" << res.below_floor << '\n';
    return res;
}

// Model and vocabulary from a checkpoint whose config echo is `cfg`.
struct LoadedModel {
    TraceModel model;
    Vocab vocab;
};

inline LoadedModel load_model(const RunConfig &cfg, const Checkpoint &ckpt) {
    if (cfg.vocab.empty()) throw std::invalid_argument("no vocabulary path in config");
    LoadedModel lm{TraceModel(cfg.model_config()), Vocab::load(cfg.vocab, cfg.level())};
    if (lm.vocab.size() != cfg.vocab_size)
        throw std::invalid_argument("vocabulary " + cfg.vocab + " has " + std::to_string(lm.vocab.size()) +
                                    " entries, checkpoint expects " + std::to_string(cfg.vocab_size));
    restore(lm.model, ckpt);
    return lm;
}

inline GenerateOptions generate_options(const RunConfig &cfg) {
    GenerateOptions g;
    g.strategy = parse_strategy(cfg.strategy);
    g.top_k = static_cast<long>(cfg.top_k);
    g.beam_size = static_cast<long>(cfg.beam_size);
    return g;
}

inline std::vector<Generated> cmd_generate(const RunConfig &cfg, const LoadedModel &lm, const std::string &prompt = {}) {
    const GenerateOptions opt = generate_options(cfg);
    RngStream rng = RngStreams::from_seed(cfg.seed).gen;
    const auto prompt_ids = prompt.empty() ? std::vector<TokenId>{} : lm.vocab.encode(prompt);
    std::vector<Generated> out;
    for (std::size_t i = 0; i < cfg.count; ++i) out.push_back(generate(lm.model, opt, rng, prompt_ids, cfg.policy(lm.vocab)));
    return out;
}

inline std::vector<Tokens> generated_tokens(const std::vector<Generated> &gs, const Vocab &v) {
    std::vector<Tokens> out;
    for (const auto &g : gs) out.push_back(v.tokens_of(g.continuation()));
    return out;
}

struct MetricsReport {
    std::vector<std::pair<std::string, std::string>> rows;
    std::vector<std::string> warnings;

    void add(const std::string &key, double v) {
        std::ostringstream os;
        os << std::setprecision(10) << v;
        rows.emplace_back(key, os.str());
    }
    void add(const std::string &key, std::string v) { rows.emplace_back(key, std::move(v)); }

    std::string format() const {
        std::string s = "# metric\tvalue\n";
        for (const auto &[k, v] : rows) s += k + '\t' + v + '\n';
        return s;
    }
};

inline MetricsReport cmd_eval(const RunConfig &cfg, const LoadedModel &lm, const std::vector<std::string> &test_lines) {
    const auto test = encode_corpus(test_lines, lm.vocab, cfg.policy(lm.vocab), cfg.max_len);
    if (test.empty()) throw std::invalid_argument("eval: empty test set");
    MetricsReport rep;
    auto rng = RngStreams::from_seed(cfg.seed);

    double log_px = 0.0, tokens = 0.0;
    for (const auto &s : test) {
        const auto est = iw_nll(lm.model, s, cfg.n_iw, rng);
        log_px += est.log_px_hat;
        tokens += static_cast<double>(est.tokens);
    }
    rep.add("ppl", std::exp(-log_px / tokens));
    if (test.size() >= 2) {
        rep.add("mi", mutual_information(lm.model, test, std::max<std::size_t>(2, cfg.mi_batch), rng));
        rep.add("au", static_cast<double>(active_units(lm.model, test, cfg.au_delta)));
    } else {
        rep.add("mi", "n/a");
        rep.add("au", "n/a");
        rep.warnings.push_back("eval: mi and au need at least 2 test sequences");
    }

    const auto cands = generated_tokens(cmd_generate(cfg, lm), lm.vocab);
    std::vector<Tokens> refs;
    for (const auto &line : test_lines) {
        Tokens t = tokenize(line, lm.vocab.level());
        if (!t.empty()) refs.push_back(std::move(t));
    }
    const auto ng = ngram_suite(cands, refs, &rep.warnings);
    auto pair_metric = [&](const std::string &k, double v) {
        if (ng.has_pairs)
            rep.add(k, v);
        else
            rep.add(k, "n/a");
    };
    pair_metric("self_bleu", ng.diversity.self_bleu);
    rep.add("dist1", ng.diversity.dist_n.at(1));
    rep.add("dist2", ng.diversity.dist_n.at(2));
    pair_metric("jaccard", ng.diversity.jaccard);
    rep.add("bleu", ng.bleu);
    rep.add("rouge1", ng.rouge1);
    rep.add("rouge2", ng.rouge2);
    rep.add("rougeL", ng.rougeL);
    rep.add("cnd", "n/a");
    return rep;
}

} // namespace tracevae
