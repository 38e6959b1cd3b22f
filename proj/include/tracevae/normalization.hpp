#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "tracevae/rng.hpp"
#include "tracevae/tensor.hpp"

namespace tracevae {

// Row-wise layer normalization with scalar gain and shift:
// gamma * (x - mean) / sqrt(var + eps) + beta, biased variance.
inline Tensor layer_norm(const Tensor &x, double gamma, double beta, double eps) {
    return add_scalar(scale(normalize_rows(x, eps), gamma), beta);
}

// Same, with a trainable 1 x 1 shift.
inline Tensor layer_norm(const Tensor &x, double gamma, const Tensor &beta, double eps) {
    if (beta.size() != 1) throw ShapeError("layer_norm: beta must be 1x1, got " + beta.shape_str());
    return add(scale(normalize_rows(x, eps), gamma), beta);
}

// Per-feature gain and bias rows, as used inside transformer blocks.
inline Tensor layer_norm_affine(const Tensor &x, const Tensor &gain, const Tensor &bias, double eps) {
    return add(mul(normalize_rows(x, eps), gain), bias);
}

struct SpectralNormResult {
    Tensor weight;
    double sigma = 0.0;
    std::size_t iterations = 0;
    bool zero_matrix = false; // weight returned unchanged
};

namespace detail {

inline double norm2(const std::vector<double> &v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace detail

// Largest singular value by power iteration on W^T W from a fixed-seed start
// vector. Runs at least `min_iters` steps, then continues until the relative
// change of the estimate drops below `tol` (capped at `max_iters`).
inline double spectral_norm_estimate(const Tensor &w, std::size_t min_iters, double tol, std::size_t *iterations = nullptr,
                                     std::size_t max_iters = 20000) {
    const std::size_t r = w.rows(), c = w.cols();
    auto wv = w.values();
    RngStream start(0x5eed);
    std::vector<double> v(c), u(r), next(c);
    for (double &x : v) x = start.normal();
    double nv = detail::norm2(v);
    if (nv == 0.0) return 0.0;
    for (double &x : v) x /= nv;

    double sigma = 0.0;
    std::size_t it = 0;
    while (it < max_iters) {
        ++it;
        std::fill(u.begin(), u.end(), 0.0);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) u[i] += wv[i * c + j] * v[j];
        const double prev = sigma;
        sigma = detail::norm2(u);
        if (sigma == 0.0) break;
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) next[j] += wv[i * c + j] * u[i];
        const double nn = detail::norm2(next);
        if (nn == 0.0) break;
        for (std::size_t j = 0; j < c; ++j) v[j] = next[j] / nn;
        if (it >= min_iters && std::abs(sigma - prev) <= tol * sigma) break;
    }
    if (iterations) *iterations = it;
    return sigma;
}

// W / sigma_max(W). A zero matrix comes back unchanged with the flag set.
inline SpectralNormResult spectral_normalize(const Tensor &w, std::size_t iters = 20, double tol = 1e-10) {
    if (iters < 1) throw std::invalid_argument("spectral_normalize: iters must be >= 1");
    SpectralNormResult res;
    bool all_zero = true;
    for (double x : w.values()) all_zero = all_zero && x == 0.0;
    if (all_zero) {
        res.weight = w.detach();
        res.zero_matrix = true;
        return res;
    }
    res.sigma = spectral_norm_estimate(w, iters, tol, &res.iterations);
    res.weight = scale(w.detach(), 1.0 / res.sigma);
    return res;
}

// In-place variant for parameters between optimizer steps.
inline SpectralNormResult spectral_normalize_inplace(Tensor &w, std::size_t iters = 20, double tol = 1e-10) {
    auto res = spectral_normalize(w, iters, tol);
    if (!res.zero_matrix) {
        auto dst = w.mutable_values();
        auto src = res.weight.values();
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return res;
}

} // namespace tracevae
