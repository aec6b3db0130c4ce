#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "sider/graph.hpp"
#include "sider/nn.hpp"
#include "test_helpers.hpp"

using namespace sider;
using namespace sider::testing;

namespace {

// gradient-check a scalar graph builder against central finite differences
void check_grad(const std::function<Var(Graph&, Var)>& build, const Tensor& x0, real tol = 1e-6) {
    Graph g;
    Var x = g.leaf(x0, true);
    Var loss = build(g, x);
    g.backward(loss);
    REQUIRE(x->grad_ready);
    Tensor numeric = numeric_grad(
        [&](const Tensor& probe) {
            Graph g2;
            return build(g2, g2.leaf(probe, false))->value[0];
        },
        x0);
    CHECK(max_rel_err(x->grad, numeric, 1e-6) < tol);
}

Tensor rand_t(std::vector<int> shape, uint64_t seed, real scale = 1.0) {
    Rng rng(seed);
    return rng.randn(std::move(shape), scale);
}

}  // namespace

TEST_CASE("elementwise op gradients") {
    Tensor x = rand_t({3, 4, 4}, 1);
    Tensor y = rand_t({3, 4, 4}, 2);

    check_grad([&](Graph& g, Var v) { return g.sum(g.add(v, g.constant(y))); }, x);
    check_grad([&](Graph& g, Var v) { return g.sum(g.mul(v, g.constant(y))); }, x);
    check_grad([&](Graph& g, Var v) { return g.sum(g.lincomb(0.7, v, -1.3, g.constant(y))); }, x);
    check_grad([&](Graph& g, Var v) { return g.sum(g.scale(v, -2.5)); }, x);
    check_grad([&](Graph& g, Var v) { return g.sum(g.add_scalar(v, 0.3)); }, x);
    check_grad([&](Graph& g, Var v) { return g.sum(g.lrelu(v)); }, x, 1e-4);
    check_grad([&](Graph& g, Var v) { return g.sum(g.silu(v)); }, x);
    check_grad([&](Graph& g, Var v) { return g.sum(g.sigmoid(v)); }, x);
    check_grad([&](Graph& g, Var v) { return g.sum(g.tanh_(v)); }, x);
    check_grad([&](Graph& g, Var v) { return g.sum(g.coupling_scale(v, 1.0)); }, x);
    check_grad([&](Graph& g, Var v) { return g.sum(g.mul(v, g.reciprocal(g.add_scalar(g.sigmoid(v), 0.5)))); }, x);
    check_grad([&](Graph& g, Var v) { return g.mse(v, g.constant(y)); }, x);
}

TEST_CASE("shape op gradients") {
    Tensor x = rand_t({4, 3, 3}, 3);
    Tensor y = rand_t({2, 3, 3}, 4);
    Tensor v6 = rand_t({6}, 5);
    Tensor c4 = rand_t({4}, 6);

    check_grad([&](Graph& g, Var v) { return g.sum(g.concat_ch(v, g.constant(y))); }, x);
    check_grad([&](Graph& g, Var v) { return g.sum(g.slice_ch(v, 1, 3)); }, x);
    check_grad([&](Graph& g, Var v) { return g.sum(g.mul(g.slice_ch(v, 0, 2), g.constant(y))); }, x);
    check_grad([&](Graph& g, Var v) { return g.sum(g.slice_vec(v, 2, 5)); }, v6);
    check_grad([&](Graph& g, Var v) { return g.sum(g.concat_vec(v, g.constant(c4))); }, v6);
    check_grad([&](Graph& g, Var v) { return g.sum(g.add_chvec(v, g.constant(c4))); }, x);
    check_grad([&](Graph& g, Var v) { return g.sum(g.mul_chvec(v, g.constant(c4))); }, x);
    check_grad([&](Graph& g, Var v) { return g.sum(g.mul_chvec(g.constant(x), g.slice_vec(v, 1, 5))); }, v6);
    check_grad([&](Graph& g, Var v) { return g.sum(g.reshape(v, {36})); }, x);
    check_grad([&](Graph& g, Var v) { return g.sum(g.upsample2(v)); }, x);
    check_grad([&](Graph& g, Var v) { return g.sum(g.mul(g.global_avg_pool(v), g.constant(c4))); }, x);
}

TEST_CASE("linear and conv gradients") {
    Tensor x = rand_t({5}, 7);
    Tensor w = rand_t({3, 5}, 8);
    check_grad([&](Graph& g, Var v) { return g.sum(g.matvec(g.constant(w), v)); }, x);
    check_grad([&](Graph& g, Var v) { return g.sum(g.matvec(v, g.constant(x))); }, w);

    Tensor img = rand_t({2, 6, 6}, 9);
    Tensor k = rand_t({3, 2, 3, 3}, 10);
    Tensor b = rand_t({3}, 11);
    Tensor mask = rand_t({3, 6, 6}, 12);  // weights the output so grads differ per pixel

    for (int stride : {1, 2}) {
        Tensor m2 = rand_t({3, stride == 1 ? 6 : 3, stride == 1 ? 6 : 3}, 13);
        check_grad(
            [&](Graph& g, Var v) {
                return g.sum(g.mul(g.conv2d(v, g.constant(k), g.constant(b), stride, 1), g.constant(m2)));
            },
            img);
        check_grad(
            [&](Graph& g, Var v) {
                return g.sum(g.mul(g.conv2d(g.constant(img), v, g.constant(b), stride, 1), g.constant(m2)));
            },
            k);
        check_grad(
            [&](Graph& g, Var v) {
                return g.sum(g.mul(g.conv2d(g.constant(img), g.constant(k), v, stride, 1), g.constant(m2)));
            },
            b);
    }
}

TEST_CASE("reduction and normalization gradients") {
    Tensor x = rand_t({6}, 14);
    Tensor y = rand_t({6}, 15);
    Tensor w = rand_t({4, 6}, 16);

    check_grad([&](Graph& g, Var v) { return g.dot(v, g.constant(y)); }, x);
    check_grad([&](Graph& g, Var v) { return g.dot(g.l2_normalize(v), g.constant(y)); }, x);
    check_grad([&](Graph& g, Var v) { return g.sum(g.matvec(g.row_l2_normalize(v), g.constant(x))); }, w);
    check_grad([&](Graph& g, Var v) { return g.softmax_ce(v, 2); }, x);
    check_grad([&](Graph& g, Var v) { return g.softmax_ce(g.add_onehot(v, 1, -0.2), 1); }, x);
}

TEST_CASE("wavelet op gradients and clamp/quantize paths") {
    Tensor x = rand_t({3, 8, 8}, 17, 0.3);
    Tensor m = rand_t({12, 4, 4}, 18);
    check_grad([&](Graph& g, Var v) { return g.sum(g.mul(g.dwt2(v), g.constant(m))); }, x);
    Tensor p = rand_t({12, 4, 4}, 19);
    Tensor m2 = rand_t({3, 8, 8}, 20);
    check_grad([&](Graph& g, Var v) { return g.sum(g.mul(g.idwt2(v), g.constant(m2))); }, p);

    // clamp passes gradient strictly inside (0,1)
    Graph g;
    Var v = g.leaf(Tensor({4}, {-0.5, 0.25, 0.75, 1.5}), true);
    g.backward(g.sum(g.clamp01(v)));
    CHECK(v->grad[0] == 0.0);
    CHECK(v->grad[1] == 1.0);
    CHECK(v->grad[2] == 1.0);
    CHECK(v->grad[3] == 0.0);

    // quantize is straight-through
    Graph g2;
    Var q = g2.leaf(Tensor({2}, {0.3, 0.7}), true);
    Var out = g2.quantize8_ste(q);
    g2.backward(g2.sum(out));
    CHECK(out->value[0] == doctest::Approx(std::round(0.3 * 255) / 255.0));
    CHECK(q->grad[0] == 1.0);
    CHECK(q->grad[1] == 1.0);
}

TEST_CASE("parameter caching accumulates shared-use gradients") {
    // one tensor used twice in a graph must receive the summed gradient
    Tensor w = rand_t({4}, 21);
    Graph g;
    Var p = g.param(w, true);
    Var p2 = g.param(w, true);
    CHECK(p == p2);
    Var loss = g.add(g.dot(p, p2), g.sum(p));  // d/dw (w.w + sum w) = 2w + 1
    g.backward(loss);
    for (int i = 0; i < 4; ++i) CHECK(p->grad[i] == doctest::Approx(2 * w[i] + 1));
}

TEST_CASE("frozen parameters get no gradient work") {
    Tensor w = rand_t({2, 2, 3, 3}, 22);
    Tensor b = Tensor::zeros({2});
    Tensor x = rand_t({2, 4, 4}, 23);
    Graph g;
    Var xin = g.leaf(x, true);
    Var out = g.conv2d(xin, g.param(w, false), g.param(b, false), 1, 1);
    g.backward(g.sum(out));
    CHECK(xin->grad_ready);
    CHECK_FALSE(g.param(w, false)->grad_ready);
}

TEST_CASE("adam step moves parameters against the gradient") {
    Tensor w({2}, {1.0, -1.0});
    Adam adam(0.1);
    for (int i = 0; i < 50; ++i) {
        Graph g;
        Var p = g.param(w, true);
        g.backward(g.dot(p, p));  // minimize |w|^2
        adam.step(g);
    }
    CHECK(std::fabs(w[0]) < 0.5);
    CHECK(std::fabs(w[1]) < 0.5);
}
