#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "tracevae/rng.hpp"
#include "tracevae/tensor.hpp"

namespace tracevae {

// Ordered registry of trainable tensors. Entries are handles, so the owning
// module and the registry see the same storage.
class ParamStore {
  public:
    Tensor add(std::string name, Tensor t) {
        for (const auto &e : entries_)
            if (e.first == name) throw std::invalid_argument("param store: duplicate name " + name);
        t.set_requires_grad(true);
        entries_.emplace_back(std::move(name), t);
        return t;
    }

    const std::vector<std::pair<std::string, Tensor>> &entries() const { return entries_; }

    const Tensor *find(const std::string &name) const {
        for (const auto &e : entries_)
            if (e.first == name) return &e.second;
        return nullptr;
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto &e : entries_) n += e.second.size();
        return n;
    }

    void zero_grad() {
        for (auto &e : entries_) e.second.zero_grad();
    }

  private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

inline Tensor randn(std::size_t rows, std::size_t cols, double stddev, RngStream &rng) {
    Tensor t(rows, cols);
    for (double &x : t.mutable_values()) x = stddev * rng.normal();
    return t;
}

} // namespace tracevae
