#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tracevae/params.hpp"

namespace tracevae {

struct AdamOptions {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip = 0.0; // global-norm clip; 0 disables
};

// First and second moments, one vector per registered parameter in store
// order.
struct AdamState {
    std::uint64_t t = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    bool operator==(const AdamState &) const = default;
};

class Adam {
  public:
    Adam(ParamStore &store, AdamOptions opt, AdamState state = {}) : store_(&store), opt_(opt), state_(std::move(state)) {
        const auto &entries = store_->entries();
        if (state_.m.empty()) {
            for (const auto &[name, t] : entries) {
                state_.m.emplace_back(t.size(), 0.0);
                state_.v.emplace_back(t.size(), 0.0);
            }
        }
        if (state_.m.size() != entries.size() || state_.v.size() != entries.size())
            throw std::invalid_argument("adam: state does not match parameter count");
        for (std::size_t i = 0; i < entries.size(); ++i)
            if (state_.m[i].size() != entries[i].second.size() || state_.v[i].size() != entries[i].second.size())
                throw std::invalid_argument("adam: state shape mismatch for " + entries[i].first);
    }

    // Global L2 norm of the current gradients; missing grads count as zero.
    double grad_norm() const {
        double s = 0.0;
        for (const auto &[name, t] : store_->entries())
            if (t.has_grad())
                for (double g : t.grad()) s += g * g;
        return std::sqrt(s);
    }

    void step() {
        double clip = 1.0;
        if (opt_.grad_clip > 0.0) {
            const double n = grad_norm();
            if (n > opt_.grad_clip) clip = opt_.grad_clip / n;
        }
        ++state_.t;
        const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(state_.t));
        const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(state_.t));
        const auto &entries = store_->entries();
        for (std::size_t i = 0; i < entries.size(); ++i) {
            Tensor p = entries[i].second;
            if (!p.has_grad()) continue;
            auto w = p.mutable_values();
            auto g = p.grad();
            auto &m = state_.m[i];
            auto &v = state_.v[i];
            for (std::size_t k = 0; k < w.size(); ++k) {
                const double gk = clip * g[k];
                m[k] = opt_.beta1 * m[k] + (1.0 - opt_.beta1) * gk;
                v[k] = opt_.beta2 * v[k] + (1.0 - opt_.beta2) * gk * gk;
                w[k] -= opt_.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + opt_.eps);
            }
        }
    }

    const AdamState &state() const { return state_; }
    const AdamOptions &options() const { return opt_; }

  private:
    ParamStore *store_;
    AdamOptions opt_;
    AdamState state_;
};

} // namespace tracevae
