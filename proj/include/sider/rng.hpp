#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "sider/tensor.hpp"

namespace sider {

// Deterministic RNG. std::normal_distribution is implementation-defined, so
// uniforms and gaussians are derived here from raw mt19937_64 output to keep
// runs reproducible across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in [0,1) with 53-bit resolution
    real uniform() { return (real)(eng_() >> 11) * 0x1.0p-53; }

    real uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + (int)(next_u64() % (uint64_t)(hi - lo + 1));
    }

    // Box-Muller, one value per call (the pair's second half is discarded to
    // keep the stream position independent of call parity)
    real normal() {
        real u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        real u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    Tensor randn(std::vector<int> shape) {
        Tensor t(std::move(shape));
        for (auto& v : t.data) v = normal();
        return t;
    }

    Tensor randn(std::vector<int> shape, real stddev) {
        Tensor t = randn(std::move(shape));
        for (auto& v : t.data) v *= stddev;
        return t;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = (size_t)(next_u64() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace sider
