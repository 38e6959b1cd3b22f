#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tracevae/commands.hpp"

using namespace tracevae;

namespace {

constexpr int kOk = 0, kUsage = 1, kVerifyFailed = 2, kNumeric = 3;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App *sub, Common &c) {
    sub->add_option("--config", c.config, "config file of `key = value` lines");
    sub->add_option("--seed", c.seed, "random seed");
    sub->add_option("--out", c.out, "output directory or file");
    sub->allow_extras();
    sub->footer("Any config key may be given as --key=value.");
}

// Defaults, then the config file, then --key=value flags, then --seed. If
// the result names a checkpoint, its config echo replaces the defaults.
RunConfig resolve_config(const Common &c, const std::vector<std::string> &extras, std::optional<Checkpoint> &ckpt) {
    std::vector<std::pair<std::string, std::string>> flags;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string &a = extras[i];
        if (a.rfind("--", 0) != 0) throw ConfigError("unexpected argument " + a);
        const auto eq = a.find('=');
        if (eq != std::string::npos) {
            flags.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
        } else {
            if (i + 1 >= extras.size()) throw ConfigError("missing value for " + a);
            flags.emplace_back(a.substr(2), extras[++i]);
        }
    }
    auto layer = [&](RunConfig base) {
        if (!c.config.empty()) base.merge(RunConfig::load(c.config).echo());
        for (const auto &[k, v] : flags) base.set(k, v);
        if (c.seed) base.seed = *c.seed;
        return base;
    };
    RunConfig cfg = layer(RunConfig{});
    if (!cfg.checkpoint.empty()) {
        ckpt = load_checkpoint(cfg.checkpoint);
        const std::string path = cfg.checkpoint;
        cfg = layer(RunConfig::parse(ckpt->config));
        cfg.checkpoint = path;
    }
    return cfg;
}

// Writes to `path` when given, stdout otherwise.
void emit(const std::string &path, const std::string &text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << text;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Segment-level temporal VAE for text: train, generate, eval, verify, bench"};
    app.require_subcommand(1);

    Common c_train, c_gen, c_eval, c_verify, c_bench;
    auto *train = app.add_subcommand("train", "train a model and write checkpoints");
    add_common(train, c_train);

    auto *gen = app.add_subcommand("generate", "sample text from a checkpoint");
    add_common(gen, c_gen);
    std::string prompt;
    gen->add_option("--prompt", prompt, "condition on this text");

    auto *eval = app.add_subcommand("eval", "score a checkpoint on a test set");
    add_common(eval, c_eval);
    std::string test_path;
    eval->add_option("--test", test_path, "test corpus (defaults to valid_corpus)");

    auto *verify = app.add_subcommand("verify", "run the invariant suite");
    add_common(verify, c_verify);
    bool negative_control = false;
    verify->add_flag("--negative-control", negative_control, "skip spectral normalization in its check");

    auto *bench = app.add_subcommand("bench", "time sequential against parallel latent sampling");
    add_common(bench, c_bench);
    BenchOptions bopt;
    bench->add_option("--seq-len", bopt.seq_len, "tokens per sequence");
    bench->add_option("--segment-lengths", bopt.segment_lengths, "segment lengths to time")->delimiter(',');
    bench->add_option("--steps", bopt.steps, "timed steps per sampler");
    bench->add_option("--warmup", bopt.warmup, "untimed steps per sampler");
    bench->add_option("--batch", bopt.batch_size, "sequences per step");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        std::optional<Checkpoint> ckpt;
        if (*train) {
            RunConfig cfg = resolve_config(c_train, train->remaining(), ckpt);
            const fs::path out = c_train.out.empty() ? fs::path("run") : fs::path(c_train.out);
            const auto res = cmd_train(cfg, out, ckpt ? &*ckpt : nullptr, &std::cerr);
            std::cout << "# metric\tvalue\n"
                      << "steps\t" << res.state.step << '\n'
                      << "valid_objective\t" << res.final_valid << '\n'
                      << "below_floor_steps\t" << res.below_floor << '\n'
                      << "checkpoint\t" << res.checkpoint << '\n';
        } else if (*gen) {
            RunConfig cfg = resolve_config(c_gen, gen->remaining(), ckpt);
            if (!ckpt) throw ConfigError("generate needs --checkpoint=PATH");
            const LoadedModel lm = load_model(cfg, *ckpt);
            const auto outs = cmd_generate(cfg, lm, prompt);
            std::string text = "# index\ttext\n";
            for (std::size_t i = 0; i < outs.size(); ++i) text += std::to_string(i) + '\t' + lm.vocab.decode(outs[i].ids) + '\n';
            emit(c_gen.out, text);
        } else if (*eval) {
            RunConfig cfg = resolve_config(c_eval, eval->remaining(), ckpt);
            if (!ckpt) throw ConfigError("eval needs --checkpoint=PATH");
            const std::string path = test_path.empty() ? cfg.valid_corpus : test_path;
            if (path.empty()) throw ConfigError("eval needs --test=PATH or valid_corpus");
            const LoadedModel lm = load_model(cfg, *ckpt);
            const auto rep = cmd_eval(cfg, lm, read_lines(path));
            for (const auto &w : rep.warnings) std::cerr << "warning: " << w << '\n';
            emit(c_eval.out, rep.format());
        } else if (*verify) {
            RunConfig cfg = resolve_config(c_verify, verify->remaining(), ckpt);
            VerifyOptions vo;
            vo.seed = cfg.seed;
            vo.skip_spectral_norm = negative_control;
            bool ok = true;
            std::string text = std::string(kVerifyHeader) + '\n';
            for (const auto &r : run_verify(vo)) {
                ok = ok && r.passed;
                text += format_check(r) + '\n';
            }
            emit(c_verify.out, text);
            return ok ? kOk : kVerifyFailed;
        } else if (*bench) {
            RunConfig cfg = resolve_config(c_bench, bench->remaining(), ckpt);
            if (cfg.vocab_size == 0) cfg.vocab_size = kNumReserved + 26;
            bopt.model = cfg.model_config();
            bopt.seed = cfg.seed;
            std::string text = std::string(kBenchHeader) + '\n';
            for (const auto &r : run_bench(bopt)) text += format_bench_row(r) + '\n';
            emit(c_bench.out, text);
        }
    } catch (const NumericError &e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const ConfigError &e) {
        std::cerr << "usage: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kOk;
}
