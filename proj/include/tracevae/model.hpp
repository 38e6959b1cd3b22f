#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "tracevae/latent.hpp"
#include "tracevae/normalization.hpp"
#include "tracevae/params.hpp"
#include "tracevae/transformer.hpp"

namespace tracevae {

// Latent dependency structure and KL pairing.
//   rgd     p(z_t | z_{t-1}, x_{<t}),  q(z_t | z_{<t}, x_{<=t})
//   ind     p(z_t) = N(0, I),          q(z_t | x_{<=t})
//   cgd     p(z_t | x_{<t}),           q(z_t | x)
//   single  one z for the whole sequence against N(0, I)
enum class Paradigm { rgd, ind, cgd, single };

inline Paradigm parse_paradigm(const std::string &s) {
    if (s == "RGD" || s == "rgd") return Paradigm::rgd;
    if (s == "IND" || s == "ind") return Paradigm::ind;
    if (s == "CGD" || s == "cgd") return Paradigm::cgd;
    if (s == "SINGLE" || s == "single") return Paradigm::single;
    throw std::invalid_argument("unknown paradigm '" + s + "' (expected RGD|IND|CGD|SINGLE)");
}

inline std::string to_string(Paradigm p) {
    switch (p) {
    case Paradigm::rgd:
        return "RGD";
    case Paradigm::ind:
        return "IND";
    case Paradigm::cgd:
        return "CGD";
    case Paradigm::single:
        return "SINGLE";
    }
    return "?";
}

struct ModelConfig {
    BackboneConfig backbone;
    LatentConfig latent;
    Paradigm paradigm = Paradigm::rgd;
    std::uint64_t seed = 1;
};

class TraceModel {
  public:
    explicit TraceModel(const ModelConfig &cfg) : cfg_(cfg) {
        RngStream init(cfg_.seed ^ 0x1a1e);
        backbone_ = Backbone(cfg_.backbone, cfg_.latent.latent_dim, params_, init);
        heads_ = make_latent_heads(cfg_.latent, cfg_.backbone.model_dim, params_, init);
        if (cfg_.latent.use_spectral_norm) apply_spectral_norm();
    }

    TraceModel(const TraceModel &) = delete;
    TraceModel &operator=(const TraceModel &) = delete;
    TraceModel(TraceModel &&) = default;
    TraceModel &operator=(TraceModel &&) = default;

    const ModelConfig &config() const { return cfg_; }
    ParamStore &params() { return params_; }
    const ParamStore &params() const { return params_; }
    const Backbone &backbone() const { return backbone_; }
    const LatentHeads &heads() const { return heads_; }
    std::size_t latent_dim() const { return cfg_.latent.latent_dim; }

    // Rescales the recurrent prior blocks to unit spectral norm.
    void apply_spectral_norm() {
        Tensor a = heads_.prior.w_mu1;
        Tensor b = heads_.prior.w_sigma1;
        spectral_normalize_inplace(a);
        spectral_normalize_inplace(b);
    }

    double beta() const { return heads_.posterior.beta.item(); }

  private:
    ModelConfig cfg_;
    ParamStore params_;
    Backbone backbone_;
    LatentHeads heads_;
};

} // namespace tracevae
