#include "sider/coupling.hpp"

#include <stdexcept>

namespace sider {

CouplingStack::CouplingStack(int data_ch, int cond_ch, int n_blocks, int hidden, uint64_t init_seed,
                             bool zero_last)
    : data_ch_(data_ch), cond_ch_(cond_ch) {
    if (n_blocks < 1) throw std::invalid_argument("coupling: need >= 1 block");
    Rng rng(init_seed);
    int in_ch = data_ch + cond_ch;
    for (int i = 0; i < n_blocks; ++i) {
        Block b;
        b.phi1 = Conv2d(in_ch, hidden, 3, 1, 1, rng);
        b.phi2 = Conv2d(hidden, data_ch, 3, 1, 1, rng);
        b.rho1 = Conv2d(in_ch, hidden, 3, 1, 1, rng);
        b.rho2 = Conv2d(hidden, data_ch, 3, 1, 1, rng);
        b.eta1 = Conv2d(in_ch, hidden, 3, 1, 1, rng);
        b.eta2 = Conv2d(hidden, data_ch, 3, 1, 1, rng);
        if (zero_last) {
            std::fill(b.phi2.w.data.begin(), b.phi2.w.data.end(), 0.0);
            std::fill(b.rho2.w.data.begin(), b.rho2.w.data.end(), 0.0);
            std::fill(b.eta2.w.data.begin(), b.eta2.w.data.end(), 0.0);
        }
        blocks_.push_back(std::move(b));
    }
}

Var CouplingStack::subnet(Graph& g, const Conv2d& l1, const Conv2d& l2, Var x, Var cond,
                          bool train) const {
    Var in = cond ? g.concat_ch(x, cond) : x;
    return l2(g, g.lrelu(l1(g, in, train)), train);
}

std::pair<Var, Var> CouplingStack::forward(Graph& g, Var a, Var b, Var cond, bool train) const {
    if (a->value.dim(0) != data_ch_ || b->value.dim(0) != data_ch_)
        throw std::invalid_argument("coupling: branch channel mismatch");
    if ((cond_ch_ == 0) != (cond == nullptr))
        throw std::invalid_argument("coupling: conditioning presence mismatch");
    for (auto& blk : blocks_) {
        a = g.add(a, subnet(g, blk.phi1, blk.phi2, b, cond, train));
        Var s = g.coupling_scale(subnet(g, blk.rho1, blk.rho2, a, cond, train), clamp_);
        Var t = subnet(g, blk.eta1, blk.eta2, a, cond, train);
        b = g.add(g.mul(b, s), t);
    }
    return {a, b};
}

std::pair<Var, Var> CouplingStack::inverse(Graph& g, Var a_out, Var b_out, Var cond, bool train) const {
    if ((cond_ch_ == 0) != (cond == nullptr))
        throw std::invalid_argument("coupling: conditioning presence mismatch");
    Var a = a_out, b = b_out;
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
        Var s = g.coupling_scale(subnet(g, it->rho1, it->rho2, a, cond, train), clamp_);
        Var t = subnet(g, it->eta1, it->eta2, a, cond, train);
        b = g.mul(g.sub(b, t), g.reciprocal(s));
        a = g.sub(a, subnet(g, it->phi1, it->phi2, b, cond, train));
    }
    return {a, b};
}

void CouplingStack::reg(const std::string& prefix, ParamList& out) {
    for (size_t i = 0; i < blocks_.size(); ++i) {
        auto& b = blocks_[i];
        std::string p = prefix + ".b" + std::to_string(i);
        b.phi1.reg(p + ".phi1", out);
        b.phi2.reg(p + ".phi2", out);
        b.rho1.reg(p + ".rho1", out);
        b.rho2.reg(p + ".rho2", out);
        b.eta1.reg(p + ".eta1", out);
        b.eta2.reg(p + ".eta2", out);
    }
}

}  // namespace sider
