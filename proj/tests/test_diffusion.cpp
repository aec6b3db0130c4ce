#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "sider/diffusion.hpp"
#include "test_helpers.hpp"

using namespace sider;
using namespace sider::testing;

namespace {

// test oracle: "predicts" a fixed noise tensor, ignoring z, t and c
struct OracleDenoiser : NoisePredictor {
    Tensor eps;
    explicit OracleDenoiser(Tensor e) : eps(std::move(e)) {}
    Var predict(Graph& g, Var, int, Var, bool) const override { return g.constant(eps); }
    int cond_dim() const override { return 4; }
};

}  // namespace

TEST_CASE("make_schedule closed forms") {
    NoiseSchedule s1 = make_schedule(1, 0.1, 0.1);
    CHECK(s1.abar(1) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(s1.abar(0) == 1.0);

    NoiseSchedule s2 = make_schedule(2, 0.1, 0.2);
    CHECK(s2.abar(1) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(s2.abar(2) == doctest::Approx(0.72).epsilon(1e-12));

    NoiseSchedule s = make_schedule(50, 1e-4, 0.02);
    for (int t = 2; t <= 50; ++t) CHECK(s.abar(t) < s.abar(t - 1));  // strictly decreasing
    CHECK(s.abar(50) < s.abar(1));

    CHECK_THROWS(make_schedule(0, 0.1, 0.2));
    CHECK_THROWS(make_schedule(5, 0.0, 0.2));
    CHECK_THROWS(make_schedule(5, 0.3, 0.2));
    CHECK_THROWS(make_schedule(5, 0.3, 1.0));
}

TEST_CASE("forward_noise limits and closed form") {
    Rng rng(1);
    LatentCode z0{rng.randn({2, 4, 4}), 0};

    // beta -> 0 limit: abar -> 1, sqrt(1-abar) -> 0, output -> z0
    NoiseSchedule tiny = make_schedule(3, 1e-30, 1e-30);
    Tensor eps = rng.randn({2, 4, 4});
    LatentCode out = forward_noise(tiny, z0, 3, eps);
    CHECK(max_abs_diff(out.values, z0.values) < 1e-12);

    // zero noise: output = sqrt(abar)*z0
    NoiseSchedule s = make_schedule(10, 1e-3, 0.1);
    LatentCode out2 = forward_noise(s, z0, 5, Tensor::zeros({2, 4, 4}));
    real a = std::sqrt(s.abar(5));
    for (int64_t i = 0; i < out2.values.size(); ++i)
        CHECK(out2.values[i] == doctest::Approx(a * z0.values[i]).epsilon(1e-12));
    CHECK(out2.timestep == 5);

    CHECK_THROWS(forward_noise(s, z0, 0, eps));
    CHECK_THROWS(forward_noise(s, z0, 11, eps));
}

TEST_CASE("forward_noise empirical variance matches abar mixing") {
    // Var(out) = abar*Var(z0) + (1-abar) for standard-normal eps, z0 fixed
    NoiseSchedule s = make_schedule(10, 0.02, 0.2);
    Rng rng(2);
    LatentCode z0{rng.randn({1, 4, 4}), 0};
    int t = 7;
    real abar = s.abar(t);

    real m = 0, m2 = 0;
    int64_t n = 0;
    for (int draw = 0; draw < 10000; ++draw) {
        Tensor eps = rng.randn({1, 4, 4});
        LatentCode out = forward_noise(s, z0, t, eps);
        for (real v : out.values.data) {
            m += v;
            m2 += v * v;
            ++n;
        }
    }
    m /= (real)n;
    real var = m2 / (real)n - m * m;
    // z0 is a fixed sample: total second moment around its own mean
    real mz = 0, mz2 = 0;
    for (real v : z0.values.data) {
        mz += v;
        mz2 += v * v;
    }
    mz /= (real)z0.values.size();
    real var_z0 = mz2 / (real)z0.values.size() - mz * mz;
    real expect = abar * var_z0 + (1 - abar);
    CHECK(std::fabs(var - expect) / expect < 0.05);
}

TEST_CASE("guided_score degeneracies are exact") {
    Rng rng(3);
    NoiseSchedule s = make_schedule(8, 1e-3, 0.05);
    Denoiser den({2, 4, 4}, 8, 4, 8, 77);
    LatentCode z{rng.randn({2, 4, 4}), 3};
    ConditionEmbedding c;
    c.values = rng.randn({4});
    c.is_null = false;

    auto uncond = [&](const LatentCode& zz) {
        Graph g;
        return den.predict(g, g.constant(zz.values), zz.timestep, g.constant(Tensor::zeros({4})), false)
            ->value;
    };

    // lambda = 0 -> bit-for-bit the unconditional prediction
    Tensor g0 = guided_score_value(den, s, z, c, {1.0, 0.0});
    CHECK(max_abs_diff(g0, uncond(z)) == 0.0);

    // c = null -> bit-for-bit unconditional for any lambda, s
    Tensor gn = guided_score_value(den, s, z, ConditionEmbedding::null_embedding(4), {2.5, 3.0});
    CHECK(max_abs_diff(gn, uncond(z)) == 0.0);

    // lambda*s = 1 reduces to the plain conditional prediction
    Tensor g1 = guided_score_value(den, s, z, c, {1.0, 1.0});
    Graph g;
    Tensor cond_pred =
        den.predict(g, g.constant(z.values), z.timestep, g.constant(c.values), false)->value;
    CHECK(max_abs_diff(g1, cond_pred) < 1e-6);
}

TEST_CASE("guided_score is affine in lambda") {
    Rng rng(4);
    NoiseSchedule s = make_schedule(8, 1e-3, 0.05);
    Denoiser den({2, 4, 4}, 8, 4, 8, 78);
    LatentCode z{rng.randn({2, 4, 4}), 5};
    ConditionEmbedding c;
    c.values = rng.randn({4});

    Tensor e0 = guided_score_value(den, s, z, c, {1.0, 0.0});
    Tensor e1 = guided_score_value(den, s, z, c, {1.0, 1.0});
    Tensor e2 = guided_score_value(den, s, z, c, {1.0, 2.0});
    // e2 - e1 == e1 - e0 (collinearity of differences)
    for (int64_t i = 0; i < e0.size(); ++i)
        CHECK(std::fabs((e2[i] - e1[i]) - (e1[i] - e0[i])) < 1e-6);
}

TEST_CASE("ddim_step inverts forward noising under an oracle denoiser") {
    Rng rng(5);
    NoiseSchedule s = make_schedule(10, 1e-3, 0.08);
    LatentCode z0{rng.randn({2, 4, 4}), 0};
    Tensor eps = rng.randn({2, 4, 4});
    OracleDenoiser oracle(eps);
    ConditionEmbedding nullc = ConditionEmbedding::null_embedding(4);

    for (int t = 2; t <= 10; ++t) {
        LatentCode zt = forward_noise(s, z0, t, eps);
        LatentCode zt1 = ddim_step_value(oracle, s, zt, nullc, {1.0, 1.0});
        LatentCode want = forward_noise(s, z0, t - 1, eps);
        CHECK(zt1.timestep == t - 1);
        CHECK(max_abs_diff(zt1.values, want.values) < 1e-10);
    }

    // t=1 with oracle -> z0 exactly (abar_0 = 1)
    LatentCode z1 = forward_noise(s, z0, 1, eps);
    LatentCode back = ddim_step_value(oracle, s, z1, nullc, {1.0, 1.0});
    CHECK(max_abs_diff(back.values, z0.values) < 1e-10);

    LatentCode z_zero{z0.values, 0};
    CHECK_THROWS_WITH_AS(ddim_step_value(oracle, s, z_zero, nullc, {1.0, 1.0}),
                         doctest::Contains("already denoised"), std::invalid_argument);
}

TEST_CASE("sample_omega oracle inversion for any t_start and determinism") {
    Rng rng(6);
    NoiseSchedule s = make_schedule(20, 1e-4, 0.02);
    LatentCode z0{rng.randn({2, 4, 4}), 0};
    Tensor eps = rng.randn({2, 4, 4});
    OracleDenoiser oracle(eps);
    ConditionEmbedding nullc = ConditionEmbedding::null_embedding(4);

    for (int t_start : {1, 5, 15, 20}) {
        LatentCode zT = forward_noise(s, z0, t_start, eps);
        LatentCode rec = sample_omega_value(oracle, s, zT, t_start, nullc, {1.0, 1.0});
        CHECK(max_abs_diff(rec.values, z0.values) < 1e-5);
    }

    // chain of length 1 equals a single step
    LatentCode z1 = forward_noise(s, z0, 1, eps);
    LatentCode via_omega = sample_omega_value(oracle, s, z1, 1, nullc, {1.0, 1.0});
    LatentCode via_step = ddim_step_value(oracle, s, {z1.values, 1}, nullc, {1.0, 1.0});
    CHECK(max_abs_diff(via_omega.values, via_step.values) == 0.0);

    // pure function: two runs bit-identical (with a real denoiser)
    Denoiser den({2, 4, 4}, 20, 4, 8, 79);
    ConditionEmbedding c;
    c.values = rng.randn({4});
    LatentCode zT = forward_noise(s, z0, 15, eps);
    Tensor a = sample_omega_value(den, s, zT, 15, c, {1.0, 3.0}).values;
    Tensor b = sample_omega_value(den, s, zT, 15, c, {1.0, 3.0}).values;
    CHECK(max_abs_diff(a, b) == 0.0);
}

TEST_CASE("strength to t_start mapping") {
    CHECK(strength_to_t_start(0.75, 20) == 15);
    CHECK(strength_to_t_start(1.0, 20) == 20);
    CHECK(strength_to_t_start(0.01, 20) == 1);  // clamped to >= 1
    CHECK_THROWS(strength_to_t_start(0.0, 20));
}

TEST_CASE("identity autoencoder round trip is exact") {
    Autoencoder ae(AutoencoderMode::Identity, 16, 0);
    Rng rng(8);
    Tensor img({3, 16, 16});
    for (auto& v : img.data) v = rng.uniform();
    LatentCode z = ae.encode_value(img);
    CHECK(z.values.shape == std::vector<int>{3, 16, 16});
    Tensor back = ae.decode_value(z.values);
    CHECK(max_abs_diff(back, img) == 0.0);
}

TEST_CASE("conv autoencoder latent shape for 64x64 is 4x16x16") {
    Autoencoder ae(AutoencoderMode::Conv, 64, 1);
    CHECK(ae.latent_shape() == std::vector<int>{4, 16, 16});
    Rng rng(9);
    Tensor img({3, 64, 64});
    for (auto& v : img.data) v = rng.uniform();
    LatentCode z = ae.encode_value(img);
    CHECK(z.values.shape == std::vector<int>{4, 16, 16});
    Tensor dec = ae.decode_value(z.values);
    CHECK(dec.shape == img.shape);
    for (real v : dec.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("train_denoiser epochs=0 leaves parameters unchanged") {
    DatasetManifest data = synth_faces(6, 2, 21);
    Autoencoder ae(AutoencoderMode::Identity, 64, 0);
    NoiseSchedule s = make_schedule(5, 1e-3, 0.05);
    Denoiser den(ae.latent_shape(), 5, 8, 8, 80);
    AttributeConditionProvider cond(8, 81);

    ParamList params;
    den.reg(params);
    std::vector<Tensor> before;
    for (auto& [name, t] : params) before.push_back(*t);

    train_denoiser(den, ae, data, s, cond, 0, 1e-3, 0.1, 5);
    for (size_t i = 0; i < params.size(); ++i) CHECK(max_abs_diff(*params[i].second, before[i]) == 0.0);
}
