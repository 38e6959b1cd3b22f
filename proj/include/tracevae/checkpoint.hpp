#pragma once

// Binary checkpoint layout, all integers and doubles little-endian:
//   "TRVAE1"  u32 version
//   str config echo
//   u64 step  f64 best_valid
//   u32 n  n x blob            parameters
//   u64 adam_t  u32 n  n x blob (first moments)  u32 n  n x blob (second moments)
//   u32 n  n x str             rng engine states (eps, xi, data, gen)
// str  = u32 length, bytes
// blob = str name, u32 rank, rank x u64 dims, prod(dims) x f64

#include <bit>
#include <cstdio>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tracevae/model.hpp"
#include "tracevae/train.hpp"

namespace tracevae {

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

inline constexpr std::string_view kCheckpointMagic = "TRVAE1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Blob {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<double> values;

    bool operator==(const Blob &) const = default;
};

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::string config;
    std::uint64_t step = 0;
    double best_valid = 0.0;
    std::vector<Blob> params;
    std::uint64_t adam_t = 0;
    std::vector<Blob> adam_m;
    std::vector<Blob> adam_v;
    std::vector<std::string> rng_states;

    bool operator==(const Checkpoint &) const = default;
};

namespace detail {

class Writer {
  public:
    template <class T> void pod(T v) {
        char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        out_.append(buf, sizeof(T));
    }
    void str(std::string_view s) {
        pod(static_cast<std::uint32_t>(s.size()));
        out_.append(s);
    }
    void blob(const Blob &b) {
        str(b.name);
        pod(static_cast<std::uint32_t>(b.dims.size()));
        for (auto d : b.dims) pod(d);
        for (double v : b.values) pod(v);
    }
    void blobs(const std::vector<Blob> &bs) {
        pod(static_cast<std::uint32_t>(bs.size()));
        for (const auto &b : bs) blob(b);
    }
    void raw(std::string_view s) { out_.append(s); }
    std::string take() { return std::move(out_); }

  private:
    std::string out_;
};

class Reader {
  public:
    explicit Reader(std::string_view in) : in_(in) {}

    template <class T> T pod() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, in_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string str() {
        const auto n = pod<std::uint32_t>();
        need(n);
        std::string s(in_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    std::string_view raw(std::size_t n) {
        need(n);
        auto s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    Blob blob() {
        Blob b;
        b.name = str();
        const auto rank = pod<std::uint32_t>();
        if (rank > 8) throw CheckpointError("checkpoint: implausible rank " + std::to_string(rank) + " for " + b.name);
        std::uint64_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            b.dims.push_back(pod<std::uint64_t>());
            count *= b.dims.back();
        }
        if (count > (in_.size() - pos_) / sizeof(double)) throw CheckpointError("checkpoint: truncated blob " + b.name);
        b.values.resize(count);
        for (auto &v : b.values) v = pod<double>();
        return b;
    }
    std::vector<Blob> blobs() {
        const auto n = pod<std::uint32_t>();
        std::vector<Blob> out;
        for (std::uint32_t i = 0; i < n; ++i) out.push_back(blob());
        return out;
    }
    bool done() const { return pos_ == in_.size(); }

  private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) throw CheckpointError("checkpoint: unexpected end of data");
    }
    std::string_view in_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline std::string serialize(const Checkpoint &c) {
    detail::Writer w;
    w.raw(kCheckpointMagic);
    w.pod(c.version);
    w.str(c.config);
    w.pod(c.step);
    w.pod(c.best_valid);
    w.blobs(c.params);
    w.pod(c.adam_t);
    w.blobs(c.adam_m);
    w.blobs(c.adam_v);
    w.pod(static_cast<std::uint32_t>(c.rng_states.size()));
    for (const auto &s : c.rng_states) w.str(s);
    return w.take();
}

inline Checkpoint deserialize(std::string_view bytes) {
    detail::Reader r(bytes);
    if (bytes.size() < kCheckpointMagic.size() || r.raw(kCheckpointMagic.size()) != kCheckpointMagic)
        throw CheckpointError("checkpoint: bad magic");
    Checkpoint c;
    c.version = r.pod<std::uint32_t>();
    if (c.version != kCheckpointVersion)
        throw CheckpointError("checkpoint: unsupported version " + std::to_string(c.version));
    c.config = r.str();
    c.step = r.pod<std::uint64_t>();
    c.best_valid = r.pod<double>();
    c.params = r.blobs();
    c.adam_t = r.pod<std::uint64_t>();
    c.adam_m = r.blobs();
    c.adam_v = r.blobs();
    const auto n = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) c.rng_states.push_back(r.str());
    if (!r.done()) throw CheckpointError("checkpoint: trailing bytes");
    return c;
}

inline void save_checkpoint(const std::string &path, const Checkpoint &c) {
    const std::string bytes = serialize(c);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("checkpoint: cannot write " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError("checkpoint: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("checkpoint: cannot move into " + path);
}

inline Checkpoint load_checkpoint(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str());
}

// Snapshot of model parameters and training state.
inline Checkpoint capture(const TraceModel &model, const TrainState &state, std::string config_echo) {
    Checkpoint c;
    c.config = std::move(config_echo);
    c.step = state.step;
    c.best_valid = state.best_valid;
    const auto &entries = model.params().entries();
    for (const auto &[name, t] : entries)
        c.params.push_back({name, {t.rows(), t.cols()}, {t.values().begin(), t.values().end()}});
    c.adam_t = state.adam.t;
    for (std::size_t i = 0; i < state.adam.m.size(); ++i) {
        const auto &name = entries.at(i).first;
        const auto dims = c.params[i].dims;
        c.adam_m.push_back({name, dims, state.adam.m[i]});
        c.adam_v.push_back({name, dims, state.adam.v[i]});
    }
    c.rng_states = {state.rng.eps.state(), state.rng.xi.state(), state.rng.data.state(), state.rng.gen.state()};
    return c;
}

// Copies parameters into `model` (names and shapes must match exactly) and
// returns the stored training state.
inline TrainState restore(TraceModel &model, const Checkpoint &c) {
    const auto &entries = model.params().entries();
    if (c.params.size() != entries.size())
        throw CheckpointError("checkpoint: holds " + std::to_string(c.params.size()) + " parameters, model has " +
                              std::to_string(entries.size()));
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto &[name, t] = entries[i];
        const Blob &b = c.params[i];
        if (b.name != name || b.dims != std::vector<std::uint64_t>{t.rows(), t.cols()})
            throw CheckpointError("checkpoint: parameter " + b.name + " does not match model parameter " + name + " " +
                                  t.shape_str());
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        Tensor t = entries[i].second;
        auto dst = t.mutable_values();
        std::copy(c.params[i].values.begin(), c.params[i].values.end(), dst.begin());
    }
    TrainState s;
    s.step = c.step;
    s.best_valid = c.best_valid;
    s.adam.t = c.adam_t;
    if (c.adam_m.size() != c.adam_v.size() || (!c.adam_m.empty() && c.adam_m.size() != entries.size()))
        throw CheckpointError("checkpoint: optimizer state does not match parameters");
    for (std::size_t i = 0; i < c.adam_m.size(); ++i) {
        if (c.adam_m[i].values.size() != entries[i].second.size() || c.adam_v[i].values.size() != entries[i].second.size())
            throw CheckpointError("checkpoint: optimizer moment shape mismatch for " + entries[i].first);
        s.adam.m.push_back(c.adam_m[i].values);
        s.adam.v.push_back(c.adam_v[i].values);
    }
    if (c.rng_states.size() != 4) throw CheckpointError("checkpoint: expected 4 rng states");
    s.rng.eps.set_state(c.rng_states[0]);
    s.rng.xi.set_state(c.rng_states[1]);
    s.rng.data.set_state(c.rng_states[2]);
    s.rng.gen.set_state(c.rng_states[3]);
    return s;
}

} // namespace tracevae
