#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <chrono>

#include "doctest.h"
#include "sider/attack.hpp"
#include "test_helpers.hpp"

using namespace sider;
using namespace sider::testing;

namespace {

struct SmallRig {
    DatasetManifest data = synth_faces(6, 2, 77, 16);
    Autoencoder ae{AutoencoderMode::Identity, 16, 0};
    NoiseSchedule sched = make_schedule(3, 1e-3, 0.05);
    Denoiser den{{3, 16, 16}, 3, 8, 8, 101};
    Embedder emb1{16, 16, 4, 0, 102};
    Embedder emb2{16, 16, 4, 1, 103};
    EnsembleConfig ens = EnsembleConfig::uniform({&emb1, &emb2});
    ConditionEmbedding cond = ConditionEmbedding::null_embedding(8);
    FaceMask mask = make_mask(16, {3, 16, 16}, "full");
    AttackConfig cfg;

    SmallRig() {
        cfg.iterations = 3;
        cfg.alpha = 0.01;
        cfg.mu = 0.6;
        cfg.strength = 1.0;
        cfg.guidance = {1.0, 0.0};  // unconditional chain for speed
    }
};

}  // namespace

TEST_CASE("make_mask full and oval geometry") {
    FaceMask full = make_mask(64, {4, 16, 16}, "full");
    CHECK(full.support() == 16 * 16);
    for (real v : full.values.data) CHECK(v == 1.0);

    FaceMask oval = make_mask(64, {4, 16, 16}, "oval");
    CHECK(oval.support() > 0);
    CHECK(oval.support() < 16 * 16);
    // corners are outside the ellipse
    CHECK(oval.values.data[0] == 0.0);
    CHECK(oval.values.data[15] == 0.0);
    CHECK(oval.values.data[16 * 16 - 1] == 0.0);
    CHECK(oval.values.data[16 * 15] == 0.0);
    // center is inside
    CHECK(oval.values.data[8 * 16 + 8] == 1.0);

    CHECK_THROWS(make_mask(64, {4, 16, 16}, "external", "/nonexistent/mask.png"));
    CHECK_THROWS(make_mask(64, {4, 16, 16}, "bogus"));
}

TEST_CASE("majority downsample keeps the support ratio of a half-ones mask") {
    Tensor half({64, 64});
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) half.data[(size_t)(y * 64 + x)] = (x < 32) ? 1.0 : 0.0;
    Tensor down = majority_downsample(half, 16, 16);
    real src_ratio = 0.5;
    real got = 0;
    for (real v : down.data) got += v;
    got /= down.size();
    CHECK(std::fabs(got - src_ratio) <= 0.1 * src_ratio);
}

TEST_CASE("momentum_step normalization, accumulation and bound") {
    Rng rng(1);
    Tensor g0 = Tensor::zeros({2, 4, 4});
    Tensor grad = rng.randn({2, 4, 4});

    // mu = 0: g = grad/||grad||_1, so ||g||_1 = 1
    MomentumState m = momentum_step({g0}, grad, 0.0);
    real l1 = 0;
    for (real v : m.g.data) l1 += std::fabs(v);
    CHECK(l1 == doctest::Approx(1.0).epsilon(1e-12));

    // collinear accumulation with mu = 1 doubles the direction
    MomentumState m2 = momentum_step({m.g}, grad, 1.0);
    for (int64_t i = 0; i < m.g.size(); ++i) CHECK(m2.g[i] == doctest::Approx(2 * m.g[i]).epsilon(1e-12));

    // zero gradient is an error
    CHECK_THROWS_WITH_AS(momentum_step({g0}, Tensor::zeros({2, 4, 4}), 0.5),
                         doctest::Contains("degenerate gradient"), std::runtime_error);

    // alternating-sign gradients with mu=0.9 stay bounded by the geometric sum
    real mu = 0.9;
    MomentumState acc{Tensor::zeros({2, 4, 4})};
    real bound = 0, mu_pow = 1;
    for (int k = 0; k < 40; ++k) {
        Tensor gk = rng.randn({2, 4, 4});
        if (k % 2) {
            for (auto& v : gk.data) v = -v;
        }
        acc = momentum_step(acc, gk, mu);
        bound += mu_pow;
        mu_pow *= mu;
        real n1 = 0;
        for (real v : acc.g.data) n1 += std::fabs(v);
        CHECK(n1 <= bound + 1e-9);
        CHECK(n1 <= 1.0 / (1.0 - mu) + 1e-9);
    }
}

TEST_CASE("masked_update sign semantics and off-mask exactness") {
    Rng rng(2);
    Tensor zT = rng.randn({2, 4, 4});
    real alpha = 0.05;

    FaceMask zero{Tensor::zeros({4, 4})};
    Tensor same = masked_update(zT, rng.randn({2, 4, 4}), alpha, zero);
    CHECK(max_abs_diff(same, zT) == 0.0);

    FaceMask ones{Tensor::full({4, 4}, 1.0)};
    Tensor gpos = Tensor::full({2, 4, 4}, 0.7);
    Tensor dec = masked_update(zT, gpos, alpha, ones);
    for (int64_t i = 0; i < zT.size(); ++i) CHECK(dec[i] == doctest::Approx(zT[i] - alpha).epsilon(1e-15));

    // mixed mask: off-mask coordinates unchanged after 10 chained updates
    FaceMask mixed{Tensor::zeros({4, 4})};
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 2; ++x) mixed.values.data[(size_t)(y * 4 + x)] = 1.0;
    Tensor cur = zT;
    for (int k = 0; k < 10; ++k) cur = masked_update(cur, rng.randn({2, 4, 4}), alpha, mixed);
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 2; x < 4; ++x) CHECK(cur.at3(c, y, x) == zT.at3(c, y, x));
}

TEST_CASE("grad_zT matches finite differences through a 3-step chain") {
    // 4x8x8 latent through the smooth conv decoder (sigmoid output), so the
    // whole chain is differentiable at the finite-difference probe scale
    Autoencoder ae(AutoencoderMode::Conv, 32, 5);
    NoiseSchedule sched = make_schedule(3, 1e-3, 0.05);
    Denoiser den({4, 8, 8}, 3, 8, 8, 104);
    Embedder emb(32, 16, 4, 0, 105);
    EnsembleConfig ens = EnsembleConfig::uniform({&emb});
    ConditionEmbedding cond;
    Rng rng(3);
    cond.values = rng.randn({8});
    GuidanceConfig gcfg{1.0, 3.0};

    Tensor x({3, 32, 32});
    for (auto& v : x.data) v = rng.uniform();
    LatentCode zT{rng.randn({4, 8, 8}), 3};

    auto t0 = std::chrono::steady_clock::now();
    real loss0 = 0;
    Tensor grad = grad_zT(zT, 3, x, ens, cond, gcfg, den, ae, sched, &loss0);
    CHECK(grad.shape == zT.values.shape);

    auto loss_at = [&](const Tensor& probe) {
        LatentCode z{probe, 3};
        LatentCode z0 = sample_omega_value(den, sched, z, 3, cond, gcfg);
        return ensemble_loss_value(ens, ae.decode_value(z0.values), x);
    };
    CHECK(loss_at(zT.values) == doctest::Approx(loss0).epsilon(1e-12));

    // central differences on 10 random coordinates
    Rng pick(4);
    for (int k = 0; k < 10; ++k) {
        int64_t i = (int64_t)(pick.next_u64() % (uint64_t)zT.values.size());
        real h = 1e-3;
        Tensor probe = zT.values;
        probe[i] = zT.values[i] + h;
        real fp = loss_at(probe);
        probe[i] = zT.values[i] - h;
        real fm = loss_at(probe);
        real numeric = (fp - fm) / (2 * h);
        real denom = std::max(std::fabs(numeric), (real)1e-8);
        CHECK(std::fabs(grad[i] - numeric) / denom < 1e-3);
    }
    auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(dt < 120.0);
}

TEST_CASE("gradient vanishes at an oracle-constructed loss minimum") {
    // decode(omega(zT)) == x by construction: identity AE, oracle denoiser
    // that predicts the exact injected noise, zT = forward_noise(x)
    struct Oracle : NoisePredictor {
        Tensor eps;
        Var predict(Graph& g, Var, int, Var, bool) const override { return g.constant(eps); }
        int cond_dim() const override { return 4; }
    } oracle;

    Autoencoder ae(AutoencoderMode::Identity, 8, 0);
    NoiseSchedule sched = make_schedule(4, 1e-4, 0.01);
    Embedder emb(8, 16, 4, 0, 106);
    EnsembleConfig ens = EnsembleConfig::uniform({&emb});

    Rng rng(5);
    Tensor x({3, 8, 8});
    for (auto& v : x.data) v = 0.2 + 0.6 * rng.uniform();  // interior so clamp grads flow
    oracle.eps = rng.randn({3, 8, 8});
    LatentCode z0{x, 0};
    LatentCode zT = forward_noise(sched, z0, 4, oracle.eps);

    real loss = 0;
    Tensor grad = grad_zT(zT, 4, x, ens, ConditionEmbedding::null_embedding(4), {1.0, 0.0}, oracle, ae,
                          sched, &loss);
    CHECK(loss < 1e-8);
    real gn = 0;
    for (real v : grad.data) gn += v * v;
    CHECK(std::sqrt(gn) < 1e-4);
}

TEST_CASE("attack N=0 returns the forward-noise initialization") {
    SmallRig rig;
    rig.cfg.iterations = 0;
    const Tensor& x = rig.data.samples[0].pixels;
    AttackResult res = attack(x, rig.cond, rig.ens, rig.sched, rig.cfg, 9, rig.den, rig.ae, rig.mask);
    CHECK(max_abs_diff(res.zT.values, res.zT_init.values) == 0.0);

    LatentCode z0 = rig.ae.encode_value(x);
    Rng rng(9);
    Tensor eps = rng.randn(z0.values.shape);
    LatentCode want = forward_noise(rig.sched, z0, 3, eps);
    CHECK(max_abs_diff(res.zT.values, want.values) == 0.0);
}

TEST_CASE("attack is deterministic and decreases its loss trace") {
    SmallRig rig;
    const Tensor& x = rig.data.samples[1].pixels;
    AttackResult a = attack(x, rig.cond, rig.ens, rig.sched, rig.cfg, 9, rig.den, rig.ae, rig.mask);
    AttackResult b = attack(x, rig.cond, rig.ens, rig.sched, rig.cfg, 9, rig.den, rig.ae, rig.mask);
    CHECK(max_abs_diff(a.zT.values, b.zT.values) == 0.0);
    CHECK(a.loss_trace == b.loss_trace);
    REQUIRE(a.loss_trace.size() == (size_t)rig.cfg.iterations + 1);
}

TEST_CASE("off-mask latent coordinates survive a full attack bit-exactly") {
    SmallRig rig;
    rig.mask = make_mask(16, {3, 16, 16}, "oval");
    rig.cfg.iterations = 5;
    const Tensor& x = rig.data.samples[2].pixels;
    AttackResult res = attack(x, rig.cond, rig.ens, rig.sched, rig.cfg, 10, rig.den, rig.ae, rig.mask);
    int changed = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 16; ++y)
            for (int xx = 0; xx < 16; ++xx) {
                if (rig.mask.values.data[(size_t)(y * 16 + xx)] == 0.0) {
                    CHECK(res.zT.values.at3(c, y, xx) == res.zT_init.values.at3(c, y, xx));
                } else if (res.zT.values.at3(c, y, xx) != res.zT_init.values.at3(c, y, xx)) {
                    ++changed;
                }
            }
    CHECK(changed > 0);
}

TEST_CASE("generate_pair rejects equal seeds and produces distinct outputs in [0,1]") {
    SmallRig rig;
    rig.cfg.seed_cover = 4;
    rig.cfg.seed_decoy = 4;
    const Tensor& x = rig.data.samples[3].pixels;
    CHECK_THROWS_WITH_AS(
        generate_pair(x, rig.cond, rig.ens, rig.sched, rig.cfg, rig.den, rig.ae, rig.mask),
        doctest::Contains("seeds must differ"), std::invalid_argument);

    rig.cfg.seed_decoy = 5;
    AdversarialPair p = generate_pair(x, rig.cond, rig.ens, rig.sched, rig.cfg, rig.den, rig.ae, rig.mask);
    for (real v : p.x_cover.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    for (real v : p.x_decoy.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    real l2 = 0;
    for (int64_t i = 0; i < p.x_cover.size(); ++i) {
        real d = p.x_cover[i] - p.x_decoy[i];
        l2 += d * d;
    }
    CHECK(std::sqrt(l2 / (real)p.x_cover.size()) > 0.0);
}
