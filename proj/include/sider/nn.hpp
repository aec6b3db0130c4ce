#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "sider/graph.hpp"
#include "sider/rng.hpp"

namespace sider {

// Ordered named-parameter registry; modules append their tensors so
// checkpoints serialize in a stable order.
using ParamList = std::vector<std::pair<std::string, Tensor*>>;

struct Conv2d {
    Tensor w, b;
    int stride = 1, pad = 1;

    Conv2d() = default;
    Conv2d(int ci, int co, int k, int stride_, int pad_, Rng& rng) : stride(stride_), pad(pad_) {
        real s = std::sqrt(2.0 / (real)(ci * k * k));
        w = rng.randn({co, ci, k, k}, s);
        b = Tensor::zeros({co});
    }

    Var operator()(Graph& g, Var x, bool train) const {
        return g.conv2d(x, g.param(const_cast<Tensor&>(w), train), g.param(const_cast<Tensor&>(b), train),
                        stride, pad);
    }

    void reg(const std::string& prefix, ParamList& out) {
        out.push_back({prefix + ".w", &w});
        out.push_back({prefix + ".b", &b});
    }
};

struct Linear {
    Tensor w, b;

    Linear() = default;
    Linear(int in, int out, Rng& rng) {
        real s = std::sqrt(2.0 / (real)in);
        w = rng.randn({out, in}, s);
        b = Tensor::zeros({out});
    }

    Var operator()(Graph& g, Var x, bool train) const {
        Var y = g.matvec(g.param(const_cast<Tensor&>(w), train), x);
        return g.add(y, g.param(const_cast<Tensor&>(b), train));
    }

    void reg(const std::string& prefix, ParamList& out) {
        out.push_back({prefix + ".w", &w});
        out.push_back({prefix + ".b", &b});
    }
};

// Adam on the trainable leaves of a graph. State is keyed by parameter
// storage address and survives across graphs/steps.
class Adam {
public:
    explicit Adam(real lr = 1e-3, real b1 = 0.9, real b2 = 0.999, real eps = 1e-8)
        : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

    void set_lr(real lr) { lr_ = lr; }

    void step(Graph& g) {
        std::vector<Graph*> one{&g};
        step(one);
    }

    // merged step over per-item graphs of one batch; gradients are summed in
    // graph order, so threaded batches stay deterministic
    void step(const std::vector<Graph*>& batch) {
        std::vector<Tensor*> order;
        std::unordered_map<Tensor*, Tensor> merged;
        for (Graph* g : batch) {
            for (auto& [node, store] : g->trainables()) {
                if (!node->grad_ready) continue;  // parameter unused by this loss
                auto it = merged.find(store);
                if (it == merged.end()) {
                    merged.emplace(store, node->grad);
                    order.push_back(store);
                } else {
                    for (int64_t i = 0; i < node->grad.size(); ++i) it->second[i] += node->grad[i];
                }
            }
        }
        if (order.empty()) return;
        ++t_;
        real c1 = 1.0 - std::pow(b1_, (real)t_);
        real c2 = 1.0 - std::pow(b2_, (real)t_);
        for (Tensor* store : order) {
            const Tensor& grad = merged[store];
            auto& st = state_[store];
            if (st.m.size() != store->size()) {
                st.m = Tensor::zeros(store->shape);
                st.v = Tensor::zeros(store->shape);
            }
            for (int64_t i = 0; i < store->size(); ++i) {
                real gr = grad[i];
                st.m[i] = b1_ * st.m[i] + (1.0 - b1_) * gr;
                st.v[i] = b2_ * st.v[i] + (1.0 - b2_) * gr * gr;
                (*store)[i] -= lr_ * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + eps_);
            }
        }
    }

private:
    struct Moments {
        Tensor m, v;
    };
    real lr_, b1_, b2_, eps_;
    int64_t t_ = 0;
    std::unordered_map<Tensor*, Moments> state_;
};

inline bool any_nan(const Tensor& t) {
    for (real v : t.data)
        if (!std::isfinite(v)) return true;
    return false;
}

}  // namespace sider
