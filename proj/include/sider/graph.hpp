#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "sider/tensor.hpp"

namespace sider {

class Graph;

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily by Graph::backward
    bool requires_grad = false;
    bool grad_ready = false;
    std::function<void(Graph&)> backprop;  // empty for leaves/constants
};

using Var = Node*;

// Tape-based reverse-mode autodiff. Nodes are appended in evaluation order;
// backward() walks the tape in reverse. One graph per training/attack step.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // ---- leaves ----
    Var constant(Tensor t);                      // no gradient
    Var leaf(Tensor t, bool requires_grad);      // e.g. the latent being attacked
    Var param(Tensor& stored, bool trainable);   // cached per &stored within a graph

    // ---- elementwise / algebra ----
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var lincomb(real sa, Var a, real sb, Var b);  // sa*a + sb*b
    Var scale(Var a, real s);
    Var add_scalar(Var a, real s);
    Var lrelu(Var a, real slope = 0.1);
    Var silu(Var a);  // x*sigmoid(x), smooth
    Var sigmoid(Var a);
    Var tanh_(Var a);
    Var coupling_scale(Var a, real c);  // exp(c*(2*sigmoid(a)-1)), positive and bounded
    Var reciprocal(Var a);
    Var clamp01(Var a);      // hard clamp, pass-through gradient strictly inside (0,1)
    Var quantize8_ste(Var a);  // round(x*255)/255 with straight-through gradient

    // ---- shape / broadcast ----
    Var concat_ch(Var a, Var b);           // {Ca,H,W}+{Cb,H,W} -> {Ca+Cb,H,W}
    Var concat_vec(Var a, Var b);
    Var slice_ch(Var a, int c0, int c1);   // channels [c0,c1)
    Var slice_vec(Var a, int i0, int i1);
    Var add_chvec(Var x, Var v);           // x{C,H,W} + v{C} broadcast
    Var mul_chvec(Var x, Var v);
    Var reshape(Var a, std::vector<int> shape);

    // ---- linear / conv ----
    Var matvec(Var w, Var x);  // w{out,in} * x{in} -> {out}
    Var conv2d(Var x, Var w, Var b, int stride, int pad);
    Var upsample2(Var x);            // nearest-neighbor x2
    Var global_avg_pool(Var x);      // {C,H,W} -> {C}

    // ---- reductions / losses ----
    Var sum(Var a);                   // -> {1}
    Var mse(Var a, Var b);            // mean squared error -> {1}
    Var dot(Var a, Var b);            // -> {1}
    Var l2_normalize(Var a);          // vector -> unit vector
    Var row_l2_normalize(Var w);      // {n,d}, each row to unit norm
    Var add_onehot(Var a, int idx, real v);
    Var softmax_ce(Var logits, int label);  // -> {1}

    // ---- wavelet (orthonormal Haar, single level) ----
    Var dwt2(Var x);   // {C,H,W} -> {4C,H/2,W/2}, band order ll,lh,hl,hh
    Var idwt2(Var x);  // inverse

    void backward(Var loss_scalar);

    const std::vector<std::pair<Var, Tensor*>>& trainables() const { return trainables_; }
    size_t num_nodes() const { return tape_.size(); }

private:
    Var make(Tensor value);
    static void ensure_grad(Var n);
    static void accum(Var n, const Tensor& g);

    std::vector<std::unique_ptr<Node>> tape_;
    std::unordered_map<const Tensor*, Var> param_cache_;
    std::vector<std::pair<Var, Tensor*>> trainables_;
};

}  // namespace sider
