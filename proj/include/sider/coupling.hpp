#pragma once

#include <utility>

#include "sider/nn.hpp"

namespace sider {

// Affine coupling stack over two equally-shaped branches, optionally
// conditioned on extra channels appended to every subnet input. Each block:
//   a' = a + phi(b, K)
//   b' = b * s(rho(a', K)) + eta(a', K)
// with s(x) = exp(clamp*(2*sigmoid(x)-1)), positive and bounded, so inversion
// is exact for any parameter values.
class CouplingStack {
public:
    CouplingStack() = default;
    // zero_last zero-initializes each subnet's output conv so the untrained
    // stack starts as the identity map (training stability); pass false for
    // fully random parameters
    CouplingStack(int data_ch, int cond_ch, int n_blocks, int hidden, uint64_t init_seed,
                  bool zero_last = true);

    std::pair<Var, Var> forward(Graph& g, Var a, Var b, Var cond, bool train) const;
    std::pair<Var, Var> inverse(Graph& g, Var a_out, Var b_out, Var cond, bool train) const;

    int data_channels() const { return data_ch_; }
    int cond_channels() const { return cond_ch_; }
    int blocks() const { return (int)blocks_.size(); }

    void reg(const std::string& prefix, ParamList& out);

private:
    struct Block {
        Conv2d phi1, phi2, rho1, rho2, eta1, eta2;
    };
    Var subnet(Graph& g, const Conv2d& l1, const Conv2d& l2, Var x, Var cond, bool train) const;

    int data_ch_ = 0, cond_ch_ = 0;
    real clamp_ = 1.0;
    std::vector<Block> blocks_;
};

}  // namespace sider
