#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tracevae/model.hpp"
#include "tracevae/segment.hpp"
#include "tracevae/train.hpp"
#include "tracevae/vocab.hpp"

namespace tracevae {

class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Every knob of a run. Text form is `key = value` per line with `#`
// comments; the same keys are accepted as command-line overrides.
struct RunConfig {
    std::string paradigm = "RGD";
    bool parallel = false;
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t model_dim = 64;
    std::size_t ffn_dim = 256;
    std::size_t max_len = 128;
    bool tie_encoder_decoder = true;
    std::size_t vocab_size = 0; // filled from the vocabulary at train time
    std::size_t latent_dim = 32;
    double gamma = 3.0;
    double beta_init = 0.0;
    bool spectral_norm = false;
    std::string segment_policy = "fixed";
    std::size_t segment_length = 10;
    std::string delimiters = ".";
    std::string token_level = "char";
    std::size_t batch_size = 32;
    double lr = 5e-5;
    double grad_clip = 0.0;
    std::size_t steps = 2000;
    std::size_t cycles = 4;
    double ramp_fraction = 0.5;
    std::uint64_t seed = 1;
    std::size_t top_k = 50;
    std::size_t beam_size = 10;
    std::string strategy = "greedy";
    std::size_t count = 100;
    std::size_t n_iw = 100;
    std::size_t mi_batch = 32;
    double au_delta = 0.1;
    std::size_t valid_every = 100;
    std::size_t checkpoint_every = 500;
    std::size_t synthetic_lines = 2000;
    std::size_t synthetic_min_len = 20;
    std::size_t synthetic_max_len = 60;
    std::string corpus;
    std::string valid_corpus;
    std::string vocab;
    std::string checkpoint;
    std::string report;

    void set(const std::string &key, const std::string &value);
    std::string get(const std::string &key) const;
    static const std::vector<std::string> &keys();

    // Canonical text form; parse(echo()) reproduces the config exactly.
    std::string echo() const {
        std::string out;
        for (const auto &k : keys()) out += k + " = " + get(k) + "\n";
        return out;
    }

    static RunConfig parse(std::string_view text) {
        RunConfig c;
        c.merge(text);
        return c;
    }

    void merge(std::string_view text) {
        std::istringstream in{std::string(text)};
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const auto trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected `key = value`");
            set(std::string(trim(trimmed.substr(0, eq))), std::string(trim(trimmed.substr(eq + 1))));
        }
    }

    static RunConfig load(const std::string &path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config file " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    ModelConfig model_config() const {
        ModelConfig m;
        m.backbone.layers = layers;
        m.backbone.heads = heads;
        m.backbone.model_dim = model_dim;
        m.backbone.ffn_dim = ffn_dim;
        m.backbone.max_len = max_len;
        m.backbone.vocab_size = vocab_size;
        m.backbone.tie_encoder_decoder = tie_encoder_decoder;
        m.latent.latent_dim = latent_dim;
        m.latent.gamma = gamma;
        m.latent.beta_init = beta_init;
        m.latent.use_spectral_norm = spectral_norm;
        m.latent.parallel = parallel;
        m.paradigm = parse_paradigm(paradigm);
        m.seed = seed;
        m.backbone.validate();
        m.latent.validate();
        return m;
    }

    TrainOptions train_options() const {
        TrainOptions t;
        t.steps = steps;
        t.batch_size = batch_size;
        t.adam.lr = lr;
        t.adam.grad_clip = grad_clip;
        t.cycles = cycles;
        t.ramp_fraction = ramp_fraction;
        return t;
    }

    TokenLevel level() const { return parse_token_level(token_level); }

    SegmentPolicy policy(const Vocab &v) const {
        if (segment_policy == "fixed") return SegmentPolicy::fixed(segment_length);
        if (segment_policy == "sentence") {
            std::vector<TokenId> ids;
            for (const auto &tok : tokenize(delimiters, v.level())) ids.push_back(v.id(tok));
            return SegmentPolicy::sentence(std::move(ids));
        }
        throw ConfigError("segment_policy must be fixed or sentence, got " + segment_policy);
    }

    static std::string_view trim(std::string_view s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string_view::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }
};

namespace detail {

template <class T> T parse_number(const std::string &key, const std::string &v) {
    T out{};
    const auto *end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw ConfigError("config key " + key + ": cannot parse '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string &key, const std::string &v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key " + key + ": expected true/false, got '" + v + "'");
}

template <class T> std::string format_number(T v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

struct ConfigField {
    std::string key;
    std::function<void(RunConfig &, const std::string &)> set;
    std::function<std::string(const RunConfig &)> get;
};

template <class T> ConfigField field(std::string key, T RunConfig::*member) {
    ConfigField f;
    f.key = key;
    f.set = [key, member](RunConfig &c, const std::string &v) {
        if constexpr (std::is_same_v<T, bool>)
            c.*member = parse_bool(key, v);
        else if constexpr (std::is_same_v<T, std::string>)
            c.*member = v;
        else
            c.*member = parse_number<T>(key, v);
    };
    f.get = [member](const RunConfig &c) -> std::string {
        if constexpr (std::is_same_v<T, bool>)
            return c.*member ? "true" : "false";
        else if constexpr (std::is_same_v<T, std::string>)
            return c.*member;
        else
            return format_number(c.*member);
    };
    return f;
}

inline const std::vector<ConfigField> &config_fields() {
    static const std::vector<ConfigField> fields{
        field("paradigm", &RunConfig::paradigm),
        field("parallel", &RunConfig::parallel),
        field("layers", &RunConfig::layers),
        field("heads", &RunConfig::heads),
        field("model_dim", &RunConfig::model_dim),
        field("ffn_dim", &RunConfig::ffn_dim),
        field("max_len", &RunConfig::max_len),
        field("tie_encoder_decoder", &RunConfig::tie_encoder_decoder),
        field("vocab_size", &RunConfig::vocab_size),
        field("latent_dim", &RunConfig::latent_dim),
        field("gamma", &RunConfig::gamma),
        field("beta_init", &RunConfig::beta_init),
        field("spectral_norm", &RunConfig::spectral_norm),
        field("segment_policy", &RunConfig::segment_policy),
        field("segment_length", &RunConfig::segment_length),
        field("delimiters", &RunConfig::delimiters),
        field("token_level", &RunConfig::token_level),
        field("batch_size", &RunConfig::batch_size),
        field("lr", &RunConfig::lr),
        field("grad_clip", &RunConfig::grad_clip),
        field("steps", &RunConfig::steps),
        field("cycles", &RunConfig::cycles),
        field("ramp_fraction", &RunConfig::ramp_fraction),
        field("seed", &RunConfig::seed),
        field("top_k", &RunConfig::top_k),
        field("beam_size", &RunConfig::beam_size),
        field("strategy", &RunConfig::strategy),
        field("count", &RunConfig::count),
        field("n_iw", &RunConfig::n_iw),
        field("mi_batch", &RunConfig::mi_batch),
        field("au_delta", &RunConfig::au_delta),
        field("valid_every", &RunConfig::valid_every),
        field("checkpoint_every", &RunConfig::checkpoint_every),
        field("synthetic_lines", &RunConfig::synthetic_lines),
        field("synthetic_min_len", &RunConfig::synthetic_min_len),
        field("synthetic_max_len", &RunConfig::synthetic_max_len),
        field("corpus", &RunConfig::corpus),
        field("valid_corpus", &RunConfig::valid_corpus),
        field("vocab", &RunConfig::vocab),
        field("checkpoint", &RunConfig::checkpoint),
        field("report", &RunConfig::report),
    };
    return fields;
}

inline const ConfigField &config_field(const std::string &key) {
    for (const auto &f : config_fields())
        if (f.key == key) return f;
    throw ConfigError("unknown config key '" + key + "'");
}

} // namespace detail

inline void RunConfig::set(const std::string &key, const std::string &value) { detail::config_field(key).set(*this, value); }

inline std::string RunConfig::get(const std::string &key) const { return detail::config_field(key).get(*this); }

inline const std::vector<std::string> &RunConfig::keys() {
    static const std::vector<std::string> ks = [] {
        std::vector<std::string> out;
        for (const auto &f : detail::config_fields()) out.push_back(f.key);
        return out;
    }();
    return ks;
}

} // namespace tracevae
