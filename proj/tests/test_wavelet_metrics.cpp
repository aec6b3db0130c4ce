#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <chrono>

#include "doctest.h"
#include "sider/metrics.hpp"
#include "sider/wavelet.hpp"
#include "test_helpers.hpp"

using namespace sider;
using namespace sider::testing;

TEST_CASE("haar dwt of a constant image is DC-only with ll = 2c") {
    Tensor img = Tensor::full({3, 8, 8}, 0.37);
    WaveletPlanes p = dwt(img);
    for (real v : p.ll.data) CHECK(v == doctest::Approx(2 * 0.37).epsilon(1e-12));
    CHECK(linf(p.lh) < 1e-12);
    CHECK(linf(p.hl) < 1e-12);
    CHECK(linf(p.hh) < 1e-12);
}

TEST_CASE("dwt/idwt perfect reconstruction and energy preservation, 100 random images") {
    Rng rng(99);
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 100; ++i) {
        Tensor img({3, 64, 64});
        for (auto& v : img.data) v = rng.uniform();
        WaveletPlanes p = dwt(img);
        Tensor rec = idwt(p);
        CHECK(max_abs_diff(rec, img) < 1e-6);

        real ex = 0, eb = 0;
        for (real v : img.data) ex += v * v;
        for (const Tensor* b : {&p.ll, &p.lh, &p.hl, &p.hh})
            for (real v : b->data) eb += v * v;
        CHECK(std::fabs(ex - eb) / ex < 1e-6);
    }
    auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(dt < 5.0);
}

TEST_CASE("dwt rejects odd dimensions") {
    CHECK_THROWS(dwt(Tensor::zeros({3, 7, 8})));
    CHECK_THROWS(dwt(Tensor::zeros({3, 8, 7})));
}

TEST_CASE("stack/unstack round trip") {
    Rng rng(7);
    Tensor img = rng.randn({3, 16, 16});
    WaveletPlanes p = dwt(img);
    Tensor stacked = planes_stack(p);
    CHECK(stacked.shape == std::vector<int>{12, 8, 8});
    WaveletPlanes q = planes_unstack(stacked);
    CHECK(max_abs_diff(p.ll, q.ll) == 0.0);
    CHECK(max_abs_diff(p.hh, q.hh) == 0.0);
    CHECK(max_abs_diff(idwt_stack(stacked), idwt(p)) == 0.0);
}

TEST_CASE("psnr closed forms") {
    Tensor a = Tensor::full({3, 16, 16}, 0.4);
    CHECK(psnr(a, a) == 99.0);

    Tensor b = a;
    for (auto& v : b.data) v += 0.1;
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));

    Tensor c = a;
    for (auto& v : c.data) v += 0.01;
    CHECK(psnr(a, c) == doctest::Approx(40.0).epsilon(1e-6));
}

TEST_CASE("ssim identities and bounds") {
    Rng rng(5);
    Tensor a({3, 16, 16});
    for (auto& v : a.data) v = rng.uniform();
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

    Tensor z = Tensor::zeros({3, 16, 16});
    Tensor o = Tensor::full({3, 16, 16}, 1.0);
    CHECK(ssim(z, o) < 0.05);

    Tensor b({3, 16, 16});
    for (auto& v : b.data) v = rng.uniform();
    CHECK(std::fabs(ssim(a, b) - ssim(b, a)) < 1e-9);
    CHECK(ssim(a, b) >= -1.0);
    CHECK(ssim(a, b) <= 1.0);

    CHECK_THROWS(ssim(Tensor::zeros({3, 4, 4}), Tensor::zeros({3, 4, 4})));  // smaller than window
}

TEST_CASE("quality_report rows and aggregates") {
    Rng rng(6);
    Tensor a({3, 16, 16}), b({3, 16, 16});
    for (auto& v : a.data) v = rng.uniform();
    for (auto& v : b.data) v = rng.uniform();

    auto reports = quality_report({{a, a, "same"}, {a, b, "diff"}});
    REQUIRE(reports.size() == 4);  // 2 rows + 2 aggregates
    CHECK(reports[0].psnr_db == 99.0);
    CHECK(reports[0].ssim_val == doctest::Approx(1.0));
    CHECK(reports[0].mse == 0.0);

    for (auto& r : reports) CHECK(std::fabs(r.rmse * r.rmse - r.mse) < 1e-12);

    // aggregate of a singleton tag equals the row
    CHECK(reports[2].pair_tag == "diff/mean");
    CHECK(reports[2].psnr_db == doctest::Approx(reports[1].psnr_db));
    CHECK_THROWS(quality_report({}));
}

TEST_CASE("attack_success boundaries and monotonicity in tau") {
    CHECK(attack_success({0.9, 0.8}, 0.5) == 100.0);
    CHECK(attack_success({0.1, 0.2}, 0.5) == 0.0);
    CHECK(attack_success({0.5, 0.1}, 0.3) == 50.0);
    CHECK_THROWS(attack_success({}, 0.5));

    Rng rng(3);
    std::vector<real> sims;
    for (int i = 0; i < 50; ++i) sims.push_back(rng.uniform(-1, 1));
    real prev = 100.0;
    for (real tau = -1.0; tau <= 1.0; tau += 0.05) {
        real asr = attack_success(sims, tau);
        CHECK(asr <= prev + 1e-12);
        prev = asr;
    }
}
