#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "fixtures.hpp"
#include "tracevae/tracevae.hpp"
#include "tracevae/commands.hpp"

using namespace tracevae;

namespace {

fs::path scratch(const std::string &name) {
    fs::path p = fs::path(testing::TempDir()) / ("tracevae_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunConfig small_config() {
    return RunConfig::parse("model_dim = 8\nffn_dim = 16\nlayers = 1\nlatent_dim = 3\nbatch_size = 3\nsteps = 10\n"
                            "synthetic_lines = 30\nsynthetic_min_len = 8\nsynthetic_max_len = 16\nlr = 1e-3\n"
                            "valid_every = 5\ncheckpoint_every = 5\ncount = 4\nn_iw = 3\nmax_len = 40\n");
}

struct Run {
    int code;
    std::string out;
};

Run run_cli(const std::string &args) {
    const std::string cmd = std::string(TRACE_VAE_BIN) + " " + args + " 2>/dev/null";
    FILE *p = popen(cmd.c_str(), "r");
    std::string out;
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof buf, p)) out.append(buf, n);
    const int status = pclose(p);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::vector<std::string> columns(const std::string &line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, '\t')) out.push_back(c);
    return out;
}

std::vector<std::string> lines_of(const std::string &text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string l;
    while (std::getline(ss, l)) out.push_back(l);
    return out;
}

} // namespace

TEST(Config, DefaultsAndEchoRoundTrip) {
    RunConfig c;
    EXPECT_EQ(c.top_k, 50u);
    EXPECT_EQ(c.beam_size, 10u);
    EXPECT_EQ(c.n_iw, 100u);
    EXPECT_EQ(c.au_delta, 0.1);
    c.set("paradigm", "CGD");
    c.set("lr", "0.000123");
    c.set("parallel", "true");
    const RunConfig d = RunConfig::parse(c.echo());
    EXPECT_EQ(d.echo(), c.echo());
    EXPECT_EQ(d.paradigm, "CGD");
    EXPECT_EQ(d.lr, 0.000123);
    EXPECT_TRUE(d.parallel);
}

TEST(Config, CommentsAndErrors) {
    const RunConfig c = RunConfig::parse("# header\nsteps = 7 # trailing\n\n  seed=3\n");
    EXPECT_EQ(c.steps, 7u);
    EXPECT_EQ(c.seed, 3u);
    EXPECT_THROW(RunConfig::parse("nonsense = 1\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("steps\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("steps = many\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("paradigm = HMM\n").model_config(), std::invalid_argument);
}

TEST(Checkpoint, ByteIdenticalRoundTrip) {
    const auto dir = scratch("ckpt");
    TraceModel m(fixture::tiny_config());
    fixture::scramble(m, 0.3, 4);
    TrainState st;
    st.rng = RngStreams::from_seed(9);
    st.step = 17;
    st.best_valid = 12.5;
    Adam adam(m.params(), {}, st.adam);
    st.adam = adam.state();
    save_checkpoint((dir / "a.bin").string(), capture(m, st, "steps = 17\n"));
    const Checkpoint c = load_checkpoint((dir / "a.bin").string());
    save_checkpoint((dir / "b.bin").string(), c);
    EXPECT_EQ(slurp(dir / "a.bin"), slurp(dir / "b.bin"));

    TraceModel m2(fixture::tiny_config(12, 8, 4, 99));
    const TrainState back = restore(m2, c);
    EXPECT_EQ(back, st);
    for (std::size_t i = 0; i < m.params().entries().size(); ++i) {
        const auto a = m.params().entries()[i].second.values(), b = m2.params().entries()[i].second.values();
        EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
    }
}

TEST(Checkpoint, RejectsBadMagicVersionAndShape) {
    TraceModel m(fixture::tiny_config());
    TrainState st;
    std::string bytes = serialize(capture(m, st, ""));
    std::string bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(deserialize(bad), CheckpointError);
    bad = bytes;
    bad[kCheckpointMagic.size()] = 9;
    EXPECT_THROW(deserialize(bad), CheckpointError);
    EXPECT_THROW(deserialize(bytes + "z"), CheckpointError);
    EXPECT_THROW(deserialize(bytes.substr(0, bytes.size() - 3)), CheckpointError);
    TraceModel other(fixture::tiny_config(12, 8, 5));
    EXPECT_THROW(restore(other, deserialize(bytes)), CheckpointError);
}

TEST(Corpus, GrammarLinesAndVocab) {
    const SyntheticGrammar g(20, 60);
    RngStream rng(1);
    const auto lines = g.sample_lines(1000, rng);
    std::set<char> symbols;
    for (const auto &l : lines) {
        EXPECT_GE(l.size(), 20u);
        EXPECT_LE(l.size(), 60u);
        symbols.insert(l.begin(), l.end());
        EXPECT_TRUE(std::isfinite(g.log_prob(l)));
    }
    EXPECT_EQ(build_vocab(lines, TokenLevel::character).size(), symbols.size() + kNumReserved);
}

TEST(Generate, WellFormedAndDeterministic) {
    auto cfg = fixture::tiny_config(12, 8, 3);
    cfg.backbone.max_len = 24;
    for (auto p : {Paradigm::rgd, Paradigm::ind, Paradigm::cgd, Paradigm::single}) {
        cfg.paradigm = p;
        TraceModel m(cfg);
        fixture::scramble(m, 0.4, 5);
        for (auto strategy : {Strategy::greedy, Strategy::top_k, Strategy::beam}) {
            GenerateOptions opt;
            opt.strategy = strategy;
            opt.beam_size = 3;
            opt.top_k = 4;
            RngStream a(3), b(3);
            const Generated g = generate(m, opt, a), h = generate(m, opt, b);
            EXPECT_EQ(g.ids, h.ids);
            ASSERT_FALSE(g.ids.empty());
            EXPECT_LE(g.ids.size() + 1, cfg.backbone.max_len);
            EXPECT_EQ(g.ids.back(), kSep);
            const auto seq = from_separated(g.ids);
            EXPECT_NO_THROW(validate(seq));
            EXPECT_EQ(g.latents.size(), seq.num_segments());
            for (TokenId t : g.ids) {
                EXPECT_LT(t, 12u);
                EXPECT_TRUE(t == kSep || t >= kNumReserved);
            }
            for (std::size_t i = 0; i + 1 < g.ids.size(); ++i) EXPECT_FALSE(g.ids[i] == kSep && g.ids[i + 1] == kSep);
            if (p == Paradigm::single) {
                for (const auto &z : g.latents) EXPECT_EQ(z, g.latents.front());
            }
        }
    }
}

TEST(Generate, RejectsBadOptions) {
    TraceModel m(fixture::tiny_config());
    RngStream rng(1);
    GenerateOptions opt;
    opt.strategy = Strategy::top_k;
    opt.top_k = 0;
    EXPECT_THROW(generate(m, opt, rng), std::invalid_argument);
    opt.strategy = Strategy::beam;
    opt.beam_size = -1;
    EXPECT_THROW(generate(m, opt, rng), std::invalid_argument);
    EXPECT_THROW(parse_strategy("nucleus"), std::invalid_argument);
}

TEST(Generate, PromptIsKept) {
    auto cfg = fixture::tiny_config(12, 8, 3);
    cfg.backbone.max_len = 30;
    TraceModel m(cfg);
    RngStream rng(2);
    const Generated g = generate(m, {}, rng, {5, 6, 7, 8}, SegmentPolicy::fixed(2));
    ASSERT_GE(g.ids.size(), 7u);
    EXPECT_EQ(std::vector<TokenId>(g.ids.begin(), g.ids.begin() + 6), (std::vector<TokenId>{5, 6, kSep, 7, 8, kSep}));
    EXPECT_EQ(g.prompt_length, 6u);
}

TEST(Commands, ResumeContinuesTheSameTrajectory) {
    const auto full_dir = scratch("full"), half_dir = scratch("half"), rest_dir = scratch("rest");
    RunConfig cfg = small_config();
    const auto full = cmd_train(cfg, full_dir);
    ASSERT_EQ(full.log.size(), 10u);

    RunConfig half = small_config();
    half.steps = 5;
    const auto first = cmd_train(half, half_dir);
    const Checkpoint ck = load_checkpoint(first.checkpoint);
    EXPECT_EQ(ck.step, 5u);
    RunConfig resumed = RunConfig::parse(ck.config);
    resumed.steps = 10;
    const auto second = cmd_train(resumed, rest_dir, &ck);
    ASSERT_EQ(second.log.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(second.log[i].step, full.log[5 + i].step);
        EXPECT_EQ(second.log[i].recon, full.log[5 + i].recon);
        EXPECT_EQ(second.log[i].kl_total, full.log[5 + i].kl_total);
    }
}

TEST(Commands, ParadigmsShareTokenizationButNotKl) {
    RunConfig a = small_config(), b = small_config();
    b.paradigm = "IND";
    const auto da = scratch("rgd"), db = scratch("ind");
    const auto ra = cmd_train(a, da), rb = cmd_train(b, db);
    EXPECT_EQ(slurp(da / "vocab.txt"), slurp(db / "vocab.txt"));
    EXPECT_EQ(slurp(da / "corpus.txt"), slurp(db / "corpus.txt"));
    bool differ = false;
    for (std::size_t i = 0; i < ra.log.size(); ++i) differ = differ || ra.log[i].kl_total != rb.log[i].kl_total;
    EXPECT_TRUE(differ);
}

TEST(Commands, EvalReportHasEveryKey) {
    const auto dir = scratch("eval");
    RunConfig cfg = small_config();
    const auto res = cmd_train(cfg, dir);
    const Checkpoint ck = load_checkpoint(res.checkpoint);
    const RunConfig saved = RunConfig::parse(ck.config);
    const LoadedModel lm = load_model(saved, ck);
    const auto rep = cmd_eval(saved, lm, read_lines(saved.valid_corpus));
    std::vector<std::string> keys;
    for (const auto &[k, v] : rep.rows) keys.push_back(k);
    EXPECT_EQ(keys, (std::vector<std::string>{"ppl", "mi", "au", "self_bleu", "dist1", "dist2", "jaccard", "bleu",
                                              "rouge1", "rouge2", "rougeL", "cnd"}));
    EXPECT_EQ(rep.rows.back().second, "n/a");
    EXPECT_THROW(cmd_eval(saved, lm, {}), std::invalid_argument);
}

TEST(Cli, TrainGenerateEvalVerifyBench) {
    const auto dir = scratch("cli");
    std::ofstream(dir / "small.conf") << small_config().echo();
    const std::string conf = "--config " + (dir / "small.conf").string();

    auto r = run_cli("train " + conf + " --out " + (dir / "run").string());
    ASSERT_EQ(r.code, 0);
    const auto log = lines_of(slurp(dir / "run" / "train.log"));
    ASSERT_EQ(log.size(), 11u);
    EXPECT_EQ(log[0], kStepLogHeader);
    for (std::size_t i = 1; i < log.size(); ++i) EXPECT_EQ(columns(log[i]).size(), 6u);
    const std::string ck = "--checkpoint=" + (dir / "run" / "checkpoint.bin").string();

    r = run_cli("generate " + ck + " --count=3 --seed 4");
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(lines_of(r.out).size(), 4u);
    EXPECT_EQ(r.out.rfind("# index\ttext", 0), 0u);
    EXPECT_EQ(run_cli("generate " + ck + " --count=3 --seed 4").out, r.out);
    EXPECT_EQ(run_cli("generate " + ck + " --strategy=topk --top_k=0").code, 1);
    EXPECT_EQ(run_cli("generate " + ck + " --strategy=beam --beam_size=0").code, 1);

    r = run_cli("eval " + ck + " --n_iw=2 --count=3");
    ASSERT_EQ(r.code, 0);
    const auto ev = lines_of(r.out);
    ASSERT_EQ(ev.size(), 13u);
    EXPECT_EQ(ev[0], "# metric\tvalue");
    EXPECT_EQ(columns(ev[1])[0], "ppl");

    r = run_cli("verify");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(lines_of(r.out).size(), 9u);
    r = run_cli("verify --negative-control");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("spectral_bound\tFAIL"), std::string::npos);

    r = run_cli("bench --seq-len 16 --segment-lengths 1,4,8,16 --steps 10 --warmup 1 --batch 1 --model_dim=8 "
                "--ffn_dim=16 --layers=1 --latent_dim=4");
    ASSERT_EQ(r.code, 0);
    const auto rows = lines_of(r.out);
    ASSERT_EQ(rows.size(), 5u);
    for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(columns(rows[i]).size(), 5u);

    EXPECT_EQ(run_cli("").code, 1);
    EXPECT_EQ(run_cli("train --nonsense=1").code, 1);
    EXPECT_EQ(run_cli("generate").code, 1);
    EXPECT_EQ(run_cli("train --corpus=/nonexistent/file --out " + (dir / "bad").string()).code, 1);
    EXPECT_EQ(run_cli("train --lr=1e300 " + conf + " --out " + (dir / "nan").string()).code, 3);
}
