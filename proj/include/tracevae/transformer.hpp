#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracevae/normalization.hpp"
#include "tracevae/params.hpp"
#include "tracevae/segment.hpp"
#include "tracevae/tensor.hpp"

namespace tracevae {

struct BackboneConfig {
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t model_dim = 64;
    std::size_t ffn_dim = 256;
    std::size_t max_len = 128;
    std::size_t vocab_size = 0;
    bool tie_encoder_decoder = true;
    double ln_eps = 1e-5;

    void validate() const {
        if (layers == 0 || heads == 0 || model_dim == 0 || ffn_dim == 0 || max_len == 0)
            throw std::invalid_argument("backbone config: dimensions must be positive");
        if (model_dim % heads != 0)
            throw std::invalid_argument("backbone config: model_dim " + std::to_string(model_dim) +
                                        " not divisible by heads " + std::to_string(heads));
        if (vocab_size <= kNumReserved) throw std::invalid_argument("backbone config: vocab_size must exceed reserved ids");
    }
};

// Pre-LN block. Keys carry no bias: softmax rows are invariant to it.
struct Block {
    Tensor ln1_g, ln1_b;
    Tensor wq, bq, wk, wv, bv, wo, bo;
    Tensor ln2_g, ln2_b;
    Tensor w1, b1, w2, b2;
};

struct TransformerWeights {
    Tensor tok_emb; // vocab x h, also the tied output projection
    Tensor pos_emb; // max_len x h
    std::vector<Block> blocks;
    Tensor lnf_g, lnf_b;
};

inline TransformerWeights make_transformer(const BackboneConfig &cfg, const std::string &prefix, ParamStore &store,
                                           RngStream &rng) {
    const std::size_t h = cfg.model_dim, f = cfg.ffn_dim;
    const double w_std = 1.0 / std::sqrt(static_cast<double>(h));
    const double out_std = w_std / std::sqrt(2.0 * static_cast<double>(cfg.layers));
    auto ones = [](std::size_t n) { return Tensor::full(1, n, 1.0); };
    TransformerWeights w;
    w.tok_emb = store.add(prefix + "tok_emb", randn(cfg.vocab_size, h, 0.1, rng));
    w.pos_emb = store.add(prefix + "pos_emb", randn(cfg.max_len, h, 0.1, rng));
    for (std::size_t i = 0; i < cfg.layers; ++i) {
        const std::string p = prefix + "block" + std::to_string(i) + ".";
        Block b;
        b.ln1_g = store.add(p + "ln1_g", ones(h));
        b.ln1_b = store.add(p + "ln1_b", Tensor(1, h));
        b.wq = store.add(p + "wq", randn(h, h, w_std, rng));
        b.bq = store.add(p + "bq", Tensor(1, h));
        b.wk = store.add(p + "wk", randn(h, h, w_std, rng));
        b.wv = store.add(p + "wv", randn(h, h, w_std, rng));
        b.bv = store.add(p + "bv", Tensor(1, h));
        b.wo = store.add(p + "wo", randn(h, h, out_std, rng));
        b.bo = store.add(p + "bo", Tensor(1, h));
        b.ln2_g = store.add(p + "ln2_g", ones(h));
        b.ln2_b = store.add(p + "ln2_b", Tensor(1, h));
        b.w1 = store.add(p + "w1", randn(h, f, w_std, rng));
        b.b1 = store.add(p + "b1", Tensor(1, f));
        b.w2 = store.add(p + "w2", randn(f, h, 1.0 / std::sqrt(static_cast<double>(f)) / std::sqrt(2.0 * static_cast<double>(cfg.layers)), rng));
        b.b2 = store.add(p + "b2", Tensor(1, h));
        w.blocks.push_back(std::move(b));
    }
    w.lnf_g = store.add(prefix + "lnf_g", ones(h));
    w.lnf_b = store.add(prefix + "lnf_b", Tensor(1, h));
    return w;
}

namespace detail {

inline Tensor attention(const Block &b, const Tensor &x, const BoolMatrix &keep, std::size_t heads) {
    const std::size_t h = x.cols(), dh = h / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor q = add(matmul(x, b.wq), b.bq);
    Tensor k = matmul(x, b.wk);
    Tensor v = add(matmul(x, b.wv), b.bv);
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (std::size_t i = 0; i < heads; ++i) {
        Tensor qh = heads == 1 ? q : slice_cols(q, i * dh, dh);
        Tensor kh = heads == 1 ? k : slice_cols(k, i * dh, dh);
        Tensor vh = heads == 1 ? v : slice_cols(v, i * dh, dh);
        Tensor scores = masked_fill(scale(matmul_nt(qh, kh), inv_sqrt), keep, -std::numeric_limits<double>::infinity());
        outs.push_back(matmul(softmax_rows(scores), vh));
    }
    Tensor o = heads == 1 ? outs[0] : concat_cols(outs);
    return add(matmul(o, b.wo), b.bo);
}

} // namespace detail

// Final-layer hidden states (after the closing layer norm) for `ids` placed
// at absolute positions 0..n-1. `extra`, when defined, is added to the input
// embeddings.
inline Tensor transformer_forward(const TransformerWeights &w, const BackboneConfig &cfg, std::span<const TokenId> ids,
                                  const BoolMatrix &keep, const Tensor &extra = Tensor()) {
    const std::size_t n = ids.size();
    if (n > cfg.max_len)
        throw std::invalid_argument("transformer: sequence length " + std::to_string(n) + " exceeds max_len " +
                                    std::to_string(cfg.max_len));
    if (keep.rows != n || keep.cols != n) throw ShapeError("transformer: mask does not match sequence length");
    std::vector<std::size_t> pos(n);
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    Tensor x = add(embedding(w.tok_emb, ids), gather_rows(w.pos_emb, pos));
    if (extra.defined()) x = add(x, extra);
    for (const auto &b : w.blocks) {
        x = add(x, detail::attention(b, layer_norm_affine(x, b.ln1_g, b.ln1_b, cfg.ln_eps), keep, cfg.heads));
        Tensor m = layer_norm_affine(x, b.ln2_g, b.ln2_b, cfg.ln_eps);
        x = add(x, add(matmul(gelu(add(matmul(m, b.w1), b.b1)), b.w2), b.b2));
    }
    return layer_norm_affine(x, w.lnf_g, w.lnf_b, cfg.ln_eps);
}

// Encoder outputs gathered at SEP positions. Row t of `context` comes from
// the extra-mask pass and covers segments 0..t; row t of `local` comes from
// the intra-mask pass and covers segment t only.
struct SegmentReprs {
    Tensor context; // T x h
    Tensor local;   // T x h

    std::size_t num_segments() const { return context.rows(); }
};

class Backbone {
  public:
    Backbone() = default;

    Backbone(const BackboneConfig &cfg, std::size_t latent_dim, ParamStore &store, RngStream &rng) : cfg_(cfg) {
        cfg_.validate();
        encoder_ = make_transformer(cfg_, "enc.", store, rng);
        if (!cfg_.tie_encoder_decoder) decoder_ = make_transformer(cfg_, "dec.", store, rng);
        latent_proj_ = store.add("latent_proj", randn(latent_dim, cfg_.model_dim, 1.0 / std::sqrt(static_cast<double>(latent_dim)), rng));
    }

    const BackboneConfig &config() const { return cfg_; }
    const TransformerWeights &encoder() const { return encoder_; }
    const TransformerWeights &decoder() const { return cfg_.tie_encoder_decoder ? encoder_ : decoder_; }
    const Tensor &latent_proj() const { return latent_proj_; }
    std::size_t latent_dim() const { return latent_proj_.rows(); }

    Tensor encode(std::span<const TokenId> ids, const BoolMatrix &keep) const {
        return transformer_forward(encoder_, cfg_, ids, keep);
    }

    // Two passes with shared weights and positions, different masks.
    SegmentReprs encode_dual(const SegmentedSequence &seq, const MaskPair &masks) const {
        const Tensor hx = encode(seq.ids, masks.extra);
        const Tensor hi = encode(seq.ids, masks.intra);
        return {gather_rows(hx, seq.sep_positions), gather_rows(hi, seq.sep_positions)};
    }

    // Whole-sequence representation: all-true mask, final SEP.
    Tensor encode_full(const SegmentedSequence &seq) const {
        const BoolMatrix all(seq.length(), seq.length(), true);
        const Tensor hs = encode(seq.ids, all);
        const std::size_t last = seq.sep_positions.back();
        return slice_rows(hs, last, 1);
    }

    // Causal decoder over `inputs` (BOS first). `latent_rows` holds one
    // latent per input position and is projected to h then added to the
    // input embeddings. Returns next-token logits, inputs.size() x vocab.
    Tensor decode(std::span<const TokenId> inputs, const Tensor &latent_rows) const {
        if (latent_rows.rows() != inputs.size() || latent_rows.cols() != latent_dim())
            throw ShapeError("decode: latent rows " + latent_rows.shape_str() + " do not match " +
                             std::to_string(inputs.size()) + " positions of dim " + std::to_string(latent_dim()));
        const auto &dec = decoder();
        Tensor hs = transformer_forward(dec, cfg_, inputs, causal_mask(inputs.size()), matmul(latent_rows, latent_proj_));
        return matmul_nt(hs, dec.tok_emb);
    }

    // Teacher-forced logits for [BOS] + ids predicting ids + [EOS]: L + 1
    // rows. Row i receives the latent of the segment owning its target; the
    // EOS row belongs to the last segment.
    Tensor decode_logits(const SegmentedSequence &seq, const Tensor &latents) const {
        if (latents.rows() != seq.num_segments() || latents.cols() != latent_dim())
            throw ShapeError("decode_logits: latents " + latents.shape_str() + " for " +
                             std::to_string(seq.num_segments()) + " segments of dim " + std::to_string(latent_dim()));
        const auto inputs = decoder_inputs(seq);
        return decode(inputs, gather_rows(latents, row_segments(seq)));
    }

    static std::vector<TokenId> decoder_inputs(const SegmentedSequence &seq) {
        std::vector<TokenId> in;
        in.reserve(seq.length() + 1);
        in.push_back(kBos);
        in.insert(in.end(), seq.ids.begin(), seq.ids.end());
        return in;
    }

    static std::vector<TokenId> decoder_targets(const SegmentedSequence &seq) {
        std::vector<TokenId> out(seq.ids);
        out.push_back(kEos);
        return out;
    }

    static std::vector<std::size_t> row_segments(const SegmentedSequence &seq) {
        auto seg = seq.segment_index();
        seg.push_back(seq.num_segments() - 1);
        return seg;
    }

  private:
    BackboneConfig cfg_;
    TransformerWeights encoder_;
    TransformerWeights decoder_;
    Tensor latent_proj_; // l x h
};

} // namespace tracevae
