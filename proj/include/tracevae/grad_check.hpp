#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tracevae/tensor.hpp"

namespace tracevae {

class NonDeterminismError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct FdReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coordinates = 0;
    // max |analytic - numeric| / max |analytic| over all coordinates
    double max_scaled_error = 0.0;
    // coordinates whose relative error exceeds 1e-6
    std::size_t over_1e6 = 0;
};

using NamedTensor = std::pair<std::string, Tensor>;

enum class FdStencil { three_point, five_point };

// Compares reverse-mode gradients of `loss_fn` against central differences
// for every coordinate of `params`. Relative error per coordinate is
// |analytic - numeric| / (|analytic| + 1e-12). `loss_fn` must rebuild its
// graph on each call and be deterministic.
inline FdReport finite_difference_check(const std::function<Tensor()> &loss_fn, std::vector<NamedTensor> params,
                                        double h, FdStencil stencil = FdStencil::five_point) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_difference_check: step must be positive");
    for (auto &[name, p] : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    Tensor loss = loss_fn();
    if (loss_fn().item() != loss.item())
        throw NonDeterminismError("finite_difference_check: loss differs between identical evaluations");
    backward(loss);

    FdReport rep;
    double grad_scale = 0.0;
    for (auto &[name, p] : params) {
        const std::vector<double> analytic(p.grad().begin(), p.grad().end());
        auto vals = p.mutable_values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            auto at = [&](double offset) {
                vals[i] = orig + offset;
                const double f = loss_fn().item();
                vals[i] = orig;
                return f;
            };
            const double numeric = stencil == FdStencil::three_point
                                       ? (at(h) - at(-h)) / (2.0 * h)
                                       : (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
            const double a = analytic.empty() ? 0.0 : analytic[i];
            const double abs_err = std::abs(a - numeric);
            const double rel = abs_err / (std::abs(a) + 1e-12);
            rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
            grad_scale = std::max(grad_scale, std::abs(a));
            if (rel > 1e-6) ++rep.over_1e6;
            if (rel > rep.max_rel_error || rep.coordinates == 0) {
                rep.max_rel_error = std::max(rel, rep.max_rel_error);
                rep.worst_param = name;
                rep.worst_index = i;
                rep.worst_analytic = a;
                rep.worst_numeric = numeric;
            }
            ++rep.coordinates;
        }
    }
    rep.max_scaled_error = rep.max_abs_error / (grad_scale + 1e-12);
    return rep;
}

} // namespace tracevae
